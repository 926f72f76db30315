import dataclasses
import json
import math

import pytest

from divmarl.cli import main
from divmarl.config import (
    ABLATIONS,
    KEY_REGISTRY,
    ConfigError,
    ExploreConfig,
    LearnerConfig,
    RunConfig,
    apply_ablation,
    build_run_config,
    config_to_pairs,
    describe_keys,
    parse_assignment,
    read_config_file,
    write_config_snapshot,
)
from divmarl.diversity import IntrinsicConfig


# ------------------------------------------------------------ defaults


def test_intrinsic_defaults_match_published_table():
    cfg = IntrinsicConfig()
    assert cfg.beta == 0.15
    assert cfg.beta1 == 2.0
    assert cfg.beta2 == 1.0


def test_learner_defaults():
    cfg = LearnerConfig()
    assert cfg.l1_lambda == 0.01
    assert cfg.learning_rate == 5e-4
    assert cfg.rmsprop_alpha == 0.99
    assert cfg.gamma == 0.99
    assert cfg.mixer == "dueling"
    assert cfg.ablation == "none"


def test_explore_defaults():
    cfg = ExploreConfig()
    assert cfg.epsilon_start == 1.0
    assert cfg.epsilon_end == 0.05
    assert cfg.anneal_steps == 500_000


def test_run_defaults():
    cfg = RunConfig()
    assert cfg.env_name == "pacmen"
    assert cfg.seeds == (0, 1, 2, 3, 4)
    assert cfg.eval_episodes == 100
    assert cfg.eval_epsilon == 0.0
    assert cfg.deterministic is True
    assert cfg.hidden_dim == 64


def test_config_validation_errors():
    with pytest.raises(ValueError):
        LearnerConfig(gamma=1.5)
    with pytest.raises(ValueError):
        LearnerConfig(l1_lambda=-0.1)
    with pytest.raises(ValueError):
        LearnerConfig(batch_size=0)
    with pytest.raises(ValueError):
        LearnerConfig(l1_target="params")
    with pytest.raises(ValueError):
        ExploreConfig(epsilon_start=0.1, epsilon_end=0.5)
    with pytest.raises(ValueError):
        RunConfig(env_name="atari")
    with pytest.raises(ValueError):
        RunConfig(seeds=())
    with pytest.raises(ValueError):
        RunConfig(eval_epsilon=1.5)


# ------------------------------------------------------------ file parsing


def test_read_config_file_roundtrip(tmp_path):
    cfg = RunConfig(
        total_env_steps=1234,
        seeds=(3, 5),
        learner=LearnerConfig(batch_size=7, intrinsic_recompute=True),
        explore=ExploreConfig(anneal_steps=99),
        intrinsic=IntrinsicConfig(beta=0.3, obs_mode="backward"),
    )
    path = tmp_path / "snapshot.cfg"
    write_config_snapshot(path, cfg)
    rebuilt = build_run_config(read_config_file(path))
    assert rebuilt == cfg


def test_roundtrip_preserves_nonterminating_floats(tmp_path):
    cfg = RunConfig(intrinsic=IntrinsicConfig(obs_var=1.0 / (2.0 * math.pi)))
    path = tmp_path / "snapshot.cfg"
    write_config_snapshot(path, cfg)
    rebuilt = build_run_config(read_config_file(path))
    assert rebuilt.intrinsic.obs_var == cfg.intrinsic.obs_var  # exact, not approx


def test_config_file_comments_and_blank_lines(tmp_path):
    path = tmp_path / "ok.cfg"
    path.write_text("# heading\n\nlearner.gamma = 0.5\n  \nrun.total_env_steps=42\n")
    pairs = read_config_file(path)
    assert pairs == {"learner.gamma": "0.5", "run.total_env_steps": "42"}
    cfg = build_run_config(pairs)
    assert cfg.learner.gamma == 0.5
    assert cfg.total_env_steps == 42


def test_unknown_key_is_fatal_with_location(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("learner.gamma = 0.5\nlearner.momentum = 0.9\n")
    with pytest.raises(ConfigError) as err:
        read_config_file(path)
    assert f"{path}:2" in str(err.value)
    assert "learner.momentum" in str(err.value)


def test_duplicate_key_is_fatal_with_location(tmp_path):
    path = tmp_path / "dup.cfg"
    path.write_text("learner.gamma = 0.5\n# comment\nlearner.gamma = 0.9\n")
    with pytest.raises(ConfigError) as err:
        read_config_file(path)
    assert f"{path}:3" in str(err.value)


def test_malformed_line_is_fatal_with_location(tmp_path):
    path = tmp_path / "noeq.cfg"
    path.write_text("learner.gamma 0.5\n")
    with pytest.raises(ConfigError) as err:
        read_config_file(path)
    assert f"{path}:1" in str(err.value)


def test_missing_config_file_names_path(tmp_path):
    missing = tmp_path / "nope.cfg"
    with pytest.raises(ConfigError) as err:
        read_config_file(missing)
    assert str(missing) in str(err.value)


def test_bad_values_are_config_errors():
    with pytest.raises(ConfigError):
        build_run_config({"learner.batch_size": "many"})
    with pytest.raises(ConfigError):
        build_run_config({"learner.gamma": "fast"})
    with pytest.raises(ConfigError):
        build_run_config({"run.deterministic": "maybe"})
    with pytest.raises(ConfigError):
        build_run_config({"learner.mixer": "hypernet"})
    with pytest.raises(ConfigError):
        build_run_config({"run.seeds": ""})
    with pytest.raises(ConfigError):
        build_run_config({"intrinsic.beta": "nan"})
    with pytest.raises(ConfigError):
        build_run_config({"learner.gamma": "7.0"})  # valid float, invalid range


def test_parse_assignment():
    assert parse_assignment("a.b = 3") == ("a.b", "3")
    assert parse_assignment("a.b=x=y") == ("a.b", "x=y")
    with pytest.raises(ConfigError):
        parse_assignment("novalue")
    with pytest.raises(ConfigError):
        parse_assignment("= 3")


def test_registry_described_and_serialized_completely():
    text = describe_keys()
    pairs = config_to_pairs(RunConfig())
    for name in KEY_REGISTRY:
        assert name in text
        assert name in pairs


# ------------------------------------------------------------ ablations


def _flat(cfg: RunConfig) -> dict:
    out = {}
    for section in ("learner", "explore", "intrinsic"):
        for k, v in dataclasses.asdict(getattr(cfg, section)).items():
            out[f"{section}.{k}"] = v
    return out


ABLATION_EFFECTS = {
    "raw": {"intrinsic.beta": 0.0},
    "no_identity": {"intrinsic.beta1": 0.0},
    "no_action": {"intrinsic.beta2": 0.0},
    "no_obs": {"intrinsic.use_obs_term": False},
    "all_shared": {
        "learner.individual_heads": False,
        "learner.id_in_input": True,
        "learner.l1_lambda": 0.0,
    },
    "no_l1": {"learner.l1_lambda": 0.0},
}


@pytest.mark.parametrize("tag", [t for t in ABLATIONS if t != "none"])
def test_each_ablation_changes_exactly_its_fields(tag):
    base = RunConfig()
    tagged = dataclasses.replace(base, learner=dataclasses.replace(base.learner, ablation=tag))
    applied = apply_ablation(tagged)
    before, after = _flat(tagged), _flat(applied)
    changed = {k: after[k] for k in after if after[k] != before[k]}
    assert changed == ABLATION_EFFECTS[tag]


def test_ablation_none_is_identity():
    cfg = RunConfig()
    assert apply_ablation(cfg) is cfg


# ------------------------------------------------------------ CLI


TINY = [
    "--set", "run.total_env_steps=300",
    "--set", "learner.batch_size=2",
    "--set", "learner.buffer_capacity=8",
    "--set", "learner.target_update_interval=3",
    "--set", "run.eval_episodes=3",
    "--set", "net.hidden_dim=8",
    "--set", "explore.anneal_steps=200",
]


def test_no_subcommand_prints_help(capsys):
    assert main([]) == 1
    assert "train" in capsys.readouterr().out


def test_list_keys(capsys):
    assert main(["train", "--list-keys"]) == 0
    out = capsys.readouterr().out
    assert "intrinsic.beta" in out
    assert "learner.ablation" in out


def test_missing_config_file_exit_code(tmp_path, capsys):
    missing = tmp_path / "absent.cfg"
    assert main(["train", "--config", str(missing)]) == 1
    assert str(missing) in capsys.readouterr().err


def test_unknown_set_key_exit_code(capsys):
    assert main(["train", "--set", "learner.turbo=1"]) == 1
    assert "learner.turbo" in capsys.readouterr().err


def test_bad_set_value_exit_code(capsys):
    assert main(["train", "--set", "learner.batch_size=many"]) == 1
    assert "batch_size" in capsys.readouterr().err


def test_eval_usage_errors(tmp_path, capsys):
    assert main(["eval", str(tmp_path / "ck.npz"), "--eval-episodes", "0"]) == 1
    assert main(["eval", str(tmp_path / "ck.npz"), "--epsilon", "1.5"]) == 1
    assert main(["eval", str(tmp_path / "missing.npz")]) == 2
    capsys.readouterr()


def test_analyze_missing_artifacts_exit_code(tmp_path, capsys):
    assert main(["analyze", str(tmp_path)]) == 2
    capsys.readouterr()


def test_unknown_flag_exit_code(capsys):
    assert main(["train", "--frobnicate"]) == 1
    capsys.readouterr()


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    """One tiny end-to-end CLI training run shared by the artifact tests."""
    out = tmp_path_factory.mktemp("cli_run")
    code = main(["train", "--seed", "0", "--out", str(out), *TINY])
    assert code == 0
    return out


def test_cli_train_writes_artifacts(tiny_run):
    assert (tiny_run / "config.cfg").is_file()
    seed_dir = tiny_run / "seed_0"
    for name in ("config.cfg", "metrics.csv", "checkpoint.npz", "traces.jsonl", "eval_report.json"):
        assert (seed_dir / name).is_file(), name
    report = json.loads((seed_dir / "eval_report.json").read_text())
    assert report["eval_episodes"] == 3
    assert report["env_steps"] == 300
    header = (seed_dir / "metrics.csv").read_text().splitlines()[0]
    assert header.split(",")[0] == "episode"


def test_cli_train_snapshot_reloads(tiny_run):
    cfg = build_run_config(read_config_file(tiny_run / "config.cfg"))
    assert cfg.total_env_steps == 300
    assert cfg.learner.batch_size == 2


def test_cli_train_deterministic_repeat(tiny_run, tmp_path, capsys):
    out2 = tmp_path / "repeat"
    assert main(["train", "--seed", "0", "--out", str(out2), *TINY]) == 0
    capsys.readouterr()
    for name in ("metrics.csv", "traces.jsonl", "eval_report.json"):
        a = (tiny_run / "seed_0" / name).read_bytes()
        b = (out2 / "seed_0" / name).read_bytes()
        assert a == b, f"{name} differs between identical runs"


def test_cli_eval_checkpoint(tiny_run, tmp_path, capsys):
    ck = tiny_run / "seed_0" / "checkpoint.npz"
    out = tmp_path / "eval_out"
    code = main(["eval", str(ck), "--eval-episodes", "2", "--out", str(out)])
    assert code == 0
    assert "mean return" in capsys.readouterr().out
    assert (out / "traces.jsonl").is_file()
    assert (out / "eval_report.json").is_file()


def test_cli_analyze_run_dir(tiny_run, capsys):
    code = main(["analyze", str(tiny_run)])
    assert code == 0
    out = capsys.readouterr().out
    assert "distinct room visitors" in out
    analysis = tiny_run / "analysis"
    assert (analysis / "summary.json").is_file()
    assert (analysis / "returns_curve.png").stat().st_size > 0
    assert (analysis / "returns_curve.csv").is_file()
    assert (analysis / "visitation_seed_0.png").stat().st_size > 0
    assert (analysis / "sd_ratio_seed_0.png").stat().st_size > 0
    summary = json.loads((analysis / "summary.json").read_text())
    assert summary["seeds"][0]["seed_dir"] == "seed_0"


def test_cli_train_ablation_flag(tmp_path, capsys):
    out = tmp_path / "ablated"
    code = main(["train", "--seed", "1", "--out", str(out), "--ablation", "all_shared", *TINY])
    assert code == 0
    capsys.readouterr()
    cfg = build_run_config(read_config_file(out / "config.cfg"))
    assert cfg.learner.ablation == "all_shared"
    assert cfg.learner.l1_lambda == 0.0
    # architecture switches are not registry keys; the tag rematerializes them
    applied = apply_ablation(cfg)
    assert applied.learner.individual_heads is False
    assert applied.learner.id_in_input is True


def test_cli_set_precedence_over_config_file(tmp_path, capsys):
    path = tmp_path / "base.cfg"
    path.write_text("learner.gamma = 0.5\nrun.total_env_steps = 100\n")
    out = tmp_path / "prec"
    code = main(
        [
            "train", "--config", str(path), "--seed", "0", "--out", str(out),
            "--set", "learner.gamma=0.25",
            *TINY,
        ]
    )
    assert code == 0
    capsys.readouterr()
    cfg = build_run_config(read_config_file(out / "config.cfg"))
    assert cfg.learner.gamma == 0.25  # --set wins over the file
    assert cfg.total_env_steps == 300  # later --set wins over the file too


# ------------------------------------------------------------ keep=best


def test_keep_best_restores_best_periodic_checkpoint(tmp_path):
    import numpy as np

    from divmarl.runner import run_training

    base = RunConfig(
        total_env_steps=500,
        eval_interval=1,
        eval_interval_episodes=2,
        eval_episodes=3,
        checkpoint_interval=1,
        hidden_dim=8,
        learner=LearnerConfig(batch_size=2, buffer_capacity=8, target_update_interval=3),
        explore=ExploreConfig(anneal_steps=200),
    )
    last_dir = tmp_path / "last"
    best_dir = tmp_path / "best"
    run_training(base, 0, last_dir)
    report = run_training(dataclasses.replace(base, keep="best"), 0, best_dir)

    evals = np.genfromtxt(best_dir / "eval.csv", delimiter=",", names=True)
    winner = int(evals["episode"][np.argmax(evals["mean_return"])])
    assert report["keep"] == "best"
    assert report["kept_episodes"] == winner
    assert report["episodes"] == 5  # training still ran to the full budget

    kept = np.load(best_dir / "checkpoint.npz")
    periodic = np.load(last_dir / "checkpoints" / f"ck_ep{winner:06d}.npz")
    weight_keys = [k for k in kept.files if k != "__header__"]
    assert sorted(weight_keys) == sorted(k for k in periodic.files if k != "__header__")
    for key in weight_keys:
        assert np.array_equal(kept[key], periodic[key]), key

    final_last = json.loads((last_dir / "eval_report.json").read_text())
    assert final_last["keep"] == "last"
    assert final_last["kept_episodes"] == final_last["episodes"]
