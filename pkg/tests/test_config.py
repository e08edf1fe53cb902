"""Config parsing: fail-closed sections/keys, typed casts, policy wiring."""

import pytest

from teon.config import RunConfig, SCHEDULES, config_hash, parse_config, parse_config_text
from teon.optim import ADAMW, MUON, TEON, UpdatePolicy
from teon.ortho import OrthoScheme

MINIMAL = """
[run]
task = quadratic
steps = 5
seed = 0
out_path = /tmp/cfg_test

[task]
m = 4
n = 3
K = 4

[optimizer]
optimizer = teon
eta = 0.1
mode = 1
"""


def test_minimal_defaults():
    cfg = parse_config_text(MINIMAL)
    assert cfg.task == "quadratic"
    assert cfg.steps == 5 and cfg.seed == 0
    assert cfg.task_params == {"m": 4, "n": 3, "K": 4}
    assert cfg.group_k == 2
    assert cfg.stack_set == ("QKV",)
    assert cfg.schedule == "constant" and cfg.warmup_ratio == 0.0
    assert cfg.log_every == 10 and cfg.align_every == 50
    assert cfg.log_timing is False
    assert cfg.policy.optimizer == TEON and cfg.policy.mode == 1
    assert cfg.policy.mu == 0.95
    assert cfg.policy.momentum_style == "accumulate"
    assert cfg.policy.scheme.kind == OrthoScheme.EXACT
    # adamw side policy inherits eta when adam_eta is absent
    assert cfg.adamw_policy.optimizer == ADAMW
    assert cfg.adamw_policy.eta == 0.1
    assert cfg.adamw_policy.adam_betas == (0.9, 0.999)


def test_full_config_round_trip():
    text = """
[run]
task = micro_attention
steps = 40
seed = 7
out_path = /tmp/full_cfg
log_every = 4
align_every = 8
log_timing = true

[task]
dim = 8
seq = 5
batch = 3
blocks = 2

[optimizer]
optimizer = teon
eta = 0.05          # peak rate
mode = 2
mu = 0.9
momentum_style = ema
scheme = newton_schulz
ns_steps = 7
ns_preset = cubic
weight_decay = 0.01
adam_eta = 0.001

[grouping]
K = 2
stack_set = QKV, MLP1

[schedule]
kind = cosine
warmup_ratio = 0.1
"""
    cfg = parse_config_text(text)
    assert cfg.task == "micro_attention"
    assert cfg.log_timing is True
    assert cfg.policy.mode == 2 and cfg.policy.mu == 0.9
    assert cfg.policy.momentum_style == "ema"
    assert cfg.policy.scheme.kind == OrthoScheme.NEWTON_SCHULZ
    assert cfg.policy.scheme.steps == 7
    assert cfg.policy.scheme.preset_name == "cubic"
    assert cfg.policy.weight_decay == 0.01
    assert cfg.adamw_policy.eta == 0.001
    assert cfg.adamw_policy.weight_decay == 0.01
    assert cfg.stack_set == ("QKV", "MLP1")
    assert cfg.schedule == "cosine" and cfg.warmup_ratio == 0.1


def test_parse_config_reads_file_and_names_it_in_errors(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(MINIMAL, encoding="utf-8")
    cfg = parse_config(path)
    assert cfg.steps == 5

    path.write_text(MINIMAL.replace("steps = 5", "steps = abc"), encoding="utf-8")
    with pytest.raises(ValueError, match=r"run\.ini.*\[run\] steps: expected int, got 'abc'"):
        parse_config(path)


def test_unknown_section_rejected():
    with pytest.raises(ValueError, match=r"unknown section \[extras\]"):
        parse_config_text(MINIMAL + "\n[extras]\nfoo = 1\n")


def test_missing_required_section():
    text = MINIMAL.replace("[optimizer]\noptimizer = teon\neta = 0.1\nmode = 1", "")
    with pytest.raises(ValueError, match=r"missing required section \[optimizer\]"):
        parse_config_text(text)


def test_unknown_key_names_section_and_key():
    with pytest.raises(ValueError, match=r"\[run\] unknown key 'fancy'"):
        parse_config_text(MINIMAL.replace("seed = 0", "seed = 0\nfancy = 1"))


def test_missing_required_key():
    with pytest.raises(ValueError, match=r"\[task\] missing required key 'K'"):
        parse_config_text(MINIMAL.replace("K = 4\n", ""))


def test_bool_cast_is_strict():
    bad = MINIMAL.replace("seed = 0", "seed = 0\nlog_timing = yes")
    with pytest.raises(ValueError, match="expected true/false, got 'yes'"):
        parse_config_text(bad)


def test_float_cast_error():
    with pytest.raises(ValueError, match=r"\[optimizer\] eta: expected float, got 'fast'"):
        parse_config_text(MINIMAL.replace("eta = 0.1", "eta = fast"))


def test_syntax_error_is_wrapped():
    with pytest.raises(ValueError, match="config syntax error"):
        parse_config_text("[run\ntask = quadratic\n")


def test_unknown_task():
    with pytest.raises(ValueError, match=r"\[run\] task must be one of"):
        parse_config_text(MINIMAL.replace("task = quadratic", "task = mystery"))


def test_unknown_optimizer():
    with pytest.raises(ValueError, match="optimizer must be teon/muon/adamw"):
        parse_config_text(MINIMAL.replace("optimizer = teon", "optimizer = sgd"))


def test_teon_requires_mode():
    with pytest.raises(ValueError, match="teon requires mode"):
        parse_config_text(MINIMAL.replace("mode = 1\n", ""))


def test_muon_rejects_mode_via_policy():
    bad = MINIMAL.replace("optimizer = teon", "optimizer = muon")
    with pytest.raises(ValueError, match=r"\[optimizer\]"):
        parse_config_text(bad)  # muon with mode=1 still present


def test_adamw_bans_matrix_only_keys():
    bad = MINIMAL.replace("optimizer = teon", "optimizer = adamw")
    with pytest.raises(ValueError, match="mode does not apply to adamw"):
        parse_config_text(bad)
    bad2 = MINIMAL.replace("optimizer = teon", "optimizer = adamw").replace(
        "mode = 1", "mu = 0.8"
    )
    with pytest.raises(ValueError, match="mu does not apply to adamw"):
        parse_config_text(bad2)


def test_exact_scheme_bans_ns_keys():
    bad = MINIMAL.replace("mode = 1", "mode = 1\nns_steps = 9")
    with pytest.raises(ValueError, match="ns_steps applies to scheme=newton_schulz only"):
        parse_config_text(bad)
    bad2 = MINIMAL.replace("mode = 1", "mode = 1\nns_preset = cubic")
    with pytest.raises(ValueError, match="ns_preset applies to scheme=newton_schulz only"):
        parse_config_text(bad2)


def test_unknown_scheme():
    bad = MINIMAL.replace("mode = 1", "mode = 1\nscheme = qr")
    with pytest.raises(ValueError, match="scheme must be exact or newton_schulz"):
        parse_config_text(bad)


def test_unknown_ns_preset_warns_and_falls_back_to_cubic():
    bad = MINIMAL.replace("mode = 1", "mode = 1\nscheme = newton_schulz\nns_preset = bogus")
    with pytest.warns(RuntimeWarning, match="preset 'bogus' not found"):
        cfg = parse_config_text(bad)
    assert cfg.policy.scheme.schedule == ((1.5, -0.5, 0.0),) * 5


def test_runconfig_validation_surface():
    with pytest.raises(ValueError, match="steps must be >= 1, got 0"):
        parse_config_text(MINIMAL.replace("steps = 5", "steps = 0"))
    with pytest.raises(ValueError, match="seed must be a nonnegative"):
        parse_config_text(MINIMAL.replace("seed = 0", "seed = -3"))
    grouped = MINIMAL + "\n[grouping]\nstack_set = QKV, WEIRD\n"
    with pytest.raises(ValueError, match="unknown stack_set token 'WEIRD'"):
        parse_config_text(grouped)
    sched = MINIMAL + "\n[schedule]\nkind = constant\nwarmup_ratio = 0.2\n"
    with pytest.raises(ValueError, match="constant schedule takes no warmup_ratio"):
        parse_config_text(sched)
    sched2 = MINIMAL + "\n[schedule]\nkind = cosine\nwarmup_ratio = 1.5\n"
    with pytest.raises(ValueError, match=r"warmup_ratio must lie in \[0, 1\]"):
        parse_config_text(sched2)
    with pytest.raises(ValueError, match="task dimension m must be positive"):
        parse_config_text(MINIMAL.replace("m = 4", "m = 0"))


def test_runconfig_direct_rejects_non_adamw_side_policy():
    cfg = parse_config_text(MINIMAL)
    with pytest.raises(ValueError, match="adamw_policy must be an adamw policy"):
        RunConfig(
            task=cfg.task,
            steps=cfg.steps,
            seed=cfg.seed,
            out_path=cfg.out_path,
            policy=cfg.policy,
            adamw_policy=UpdatePolicy.muon(0.1),
            task_params=dict(cfg.task_params),
        )


def test_schedule_names_exported():
    assert SCHEDULES == ("constant", "cosine", "linear_warmup")


def test_config_hash_stability_and_sensitivity():
    a = parse_config_text(MINIMAL)
    b = parse_config_text(MINIMAL)
    assert config_hash(a) == config_hash(b)
    assert len(config_hash(a)) == 10
    c = parse_config_text(MINIMAL.replace("eta = 0.1", "eta = 0.2"))
    assert config_hash(c) != config_hash(a)
    # output location does not change the identity of the experiment
    d = parse_config_text(MINIMAL.replace("/tmp/cfg_test", "/tmp/elsewhere"))
    assert config_hash(d) == config_hash(a)


def test_inline_comments_are_stripped():
    cfg = parse_config_text(MINIMAL.replace("steps = 5", "steps = 5  # short run"))
    assert cfg.steps == 5


def test_key_case_is_preserved():
    # grouping K is uppercase; a lowercase k must be rejected, not aliased
    bad = MINIMAL + "\n[grouping]\nk = 3\n"
    with pytest.raises(ValueError, match=r"\[grouping\] unknown key 'k'"):
        parse_config_text(bad)
