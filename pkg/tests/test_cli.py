"""Command-line workflow tests: artifacts, exit codes, privacy boundary."""

import filecmp
import os
import pathlib

import pytest

from zklora.cli import (
    EXIT_ACCEPT,
    EXIT_REJECT,
    EXIT_USAGE,
    _parse_number,
    load_settings,
    main,
)

CORPUS = "the proof binds the field the table binds the proof the field holds\n"

CONFIG_TEMPLATE = """
[model]
layers = 1
seq_len = 2
dim = 4
mlp_dim = 4
vocab = 4
rank = 1
eta = 2^-3

[quant]
gamma_fp = 16
bound = 256
zeta = 16
xi = 4096
radices = 16,16,16
act_bound = 8

[run]
epochs = %(epochs)d
field = test
seed = 5eed5eed

[paths]
out = %(out)s
dataset = corpus.txt
"""


def write_workspace(root, epochs=2, out="artifacts"):
    root.mkdir(parents=True, exist_ok=True)
    (root / "corpus.txt").write_text(CORPUS)
    config = root / "run.ini"
    config.write_text(CONFIG_TEMPLATE % {"epochs": epochs, "out": out})
    return config


@pytest.fixture(scope="module")
def proved_workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = write_workspace(root)
    assert main(["setup", "--config", str(config)]) == EXIT_ACCEPT
    assert main(["prove", "--config", str(config)]) == EXIT_ACCEPT
    return root, config


def test_full_flow_accepts(proved_workspace, capsys):
    root, config = proved_workspace
    capsys.readouterr()
    assert main(["verify", "--config", str(config)]) == EXIT_ACCEPT
    output = capsys.readouterr().out
    assert "accept" in output
    assert "budget_sumcheck_rounds=" in output
    assert "soundness_bound_log2=" in output
    artifacts = root / "artifacts"
    for name in (
        "key.zkck",
        "model.zkwt",
        "bundle.zklb",
        "model_final.zkwt",
        "vocab.txt",
    ):
        assert (artifacts / name).exists(), name
    assert len(list((artifacts / "tables").glob("*.zktb"))) == 8


def test_setup_is_deterministic(tmp_path):
    first = write_workspace(tmp_path / "one")
    second = write_workspace(tmp_path / "two")
    assert main(["setup", "--config", str(first)]) == EXIT_ACCEPT
    assert main(["setup", "--config", str(second)]) == EXIT_ACCEPT
    a = tmp_path / "one" / "artifacts"
    b = tmp_path / "two" / "artifacts"
    for name in ("key.zkck", "model.zkwt", "vocab.txt"):
        assert filecmp.cmp(a / name, b / name, shallow=False), name
    for table in sorted(os.listdir(a / "tables")):
        assert filecmp.cmp(
            a / "tables" / table, b / "tables" / table, shallow=False
        ), table


def test_verifier_needs_no_private_files(proved_workspace, tmp_path, capsys):
    """The verifier's input set is the bundle, tables, key, and config;
    weights, adapters, dataset, and vocab may be absent entirely."""
    root, _config = proved_workspace
    sandbox = tmp_path / "sandbox"
    (sandbox / "artifacts").mkdir(parents=True)
    for name in ("key.zkck", "bundle.zklb"):
        (sandbox / "artifacts" / name).write_bytes(
            (root / "artifacts" / name).read_bytes()
        )
    tables_dir = sandbox / "artifacts" / "tables"
    tables_dir.mkdir()
    for table in (root / "artifacts" / "tables").glob("*.zktb"):
        (tables_dir / table.name).write_bytes(table.read_bytes())
    config = sandbox / "run.ini"
    config.write_text(CONFIG_TEMPLATE % {"epochs": 2, "out": "artifacts"})
    # no corpus.txt, vocab.txt, weights.zkwt, or adapters.zkwt anywhere
    capsys.readouterr()
    assert main(["verify", "--config", str(config)]) == EXIT_ACCEPT
    assert "accept" in capsys.readouterr().out


def test_tampered_bundle_rejected(proved_workspace, tmp_path, capsys):
    root, _config = proved_workspace
    mutated_root = tmp_path / "mutated"
    config = write_workspace(mutated_root)
    (mutated_root / "artifacts").mkdir()
    for item in (root / "artifacts").iterdir():
        target = mutated_root / "artifacts" / item.name
        if item.is_dir():
            target.mkdir()
            for sub in item.iterdir():
                (target / sub.name).write_bytes(sub.read_bytes())
        else:
            target.write_bytes(item.read_bytes())
    bundle = mutated_root / "artifacts" / "bundle.zklb"
    raw = bytearray(bundle.read_bytes())
    raw[len(raw) // 2] ^= 0x10
    bundle.write_bytes(bytes(raw))
    capsys.readouterr()
    assert main(["verify", "--config", str(config)]) == EXIT_REJECT
    assert "reject" in capsys.readouterr().out


def test_wrong_epoch_count_rejected(proved_workspace, tmp_path, capsys):
    root, _config = proved_workspace
    other = tmp_path / "claim3"
    other.mkdir()
    config = other / "run.ini"
    config.write_text(
        CONFIG_TEMPLATE
        % {"epochs": 3, "out": str(root / "artifacts").replace("\\", "/")}
    )
    capsys.readouterr()
    assert main(["verify", "--config", str(config)]) == EXIT_REJECT
    assert "different run config" in capsys.readouterr().out


def test_missing_bundle_is_usage_error(tmp_path):
    config = write_workspace(tmp_path)
    assert main(["setup", "--config", str(config)]) == EXIT_ACCEPT
    assert main(["verify", "--config", str(config)]) == EXIT_USAGE


def test_usage_errors():
    assert main([]) == EXIT_USAGE
    assert main(["verify"]) == EXIT_USAGE
    assert main(["explode", "--config", "x"]) == EXIT_USAGE
    assert main(["verify", "--config", "/does/not/exist.ini"]) == EXIT_USAGE


def test_prove_without_setup_is_usage_error(tmp_path):
    config = write_workspace(tmp_path)
    assert main(["prove", "--config", str(config)]) == EXIT_USAGE


def test_invalid_config_is_usage_error(tmp_path):
    config = write_workspace(tmp_path)
    text = config.read_text().replace("rank = 1", "rank = 9")
    config.write_text(text)
    assert main(["setup", "--config", str(config)]) == EXIT_USAGE


def test_out_override(tmp_path):
    config = write_workspace(tmp_path)
    override = tmp_path / "elsewhere"
    assert (
        main(["setup", "--config", str(config), "--out", str(override)])
        == EXIT_ACCEPT
    )
    assert (override / "key.zkck").exists()
    assert not (tmp_path / "artifacts").exists()


def test_field_override_changes_run(tmp_path):
    config = write_workspace(tmp_path)
    settings = load_settings(str(config))
    assert settings.run.field_mode == "test"
    overridden = load_settings(str(config), field="big")
    assert overridden.run.field_mode == "big"
    assert overridden.run.digest() != settings.run.digest()


def test_paths_anchor_at_config_file(tmp_path):
    config = write_workspace(tmp_path / "deep" / "nested")
    settings = load_settings(str(config))
    anchor = pathlib.Path(settings.paths.out).parent
    assert anchor == tmp_path / "deep" / "nested"
    assert pathlib.Path(settings.dataset).parent == anchor


def test_number_forms():
    assert _parse_number("2^-3") == 0.125
    assert _parse_number("0.125") == 0.125
    assert _parse_number("1e-5") == 1e-5
    assert _parse_number(" 2^4 ") == 16.0


def test_synthetic_batch_when_no_dataset(tmp_path, capsys):
    root = tmp_path
    root.mkdir(exist_ok=True)
    config = root / "run.ini"
    text = CONFIG_TEMPLATE % {"epochs": 1, "out": "artifacts"}
    text = text.replace("dataset = corpus.txt", "")
    config.write_text(text)
    assert main(["setup", "--config", str(config)]) == EXIT_ACCEPT
    assert main(["prove", "--config", str(config)]) == EXIT_ACCEPT
    capsys.readouterr()
    assert main(["verify", "--config", str(config)]) == EXIT_ACCEPT


def test_bench_reports_all_metrics(tmp_path, capsys):
    config = write_workspace(tmp_path, epochs=1)
    capsys.readouterr()
    assert main(["bench", "--config", str(config)]) == EXIT_ACCEPT
    output = capsys.readouterr().out
    for metric in (
        "commit_s=",
        "prove_s=",
        "verify_s=",
        "bundle_size=",
        "peak_memory=",
    ):
        assert metric in output, metric
    assert "metric" in output and "unit" in output  # aligned table present
    values = {}
    for line in output.splitlines():
        if "=" in line and " " in line:
            name, rest = line.split("=", 1)
            values[name] = float(rest.split()[0])
    assert values["verify_s"] < values["prove_s"]


def test_bundle_size_sublinear_in_sequence_length():
    """Doubling the sequence length must far less than double the trace
    but also keep bundle growth below linear (openings and sumcheck
    transcripts scale with the log / square root of the tensor sizes)."""
    from zklora.field import TEST_MODULUS
    from zklora.model import ModelConfig, generate_weights, init_adapters
    from zklora.pipeline import RunConfig, prove_run, run_key, run_tables
    from zklora.quantize import QuantParams
    from zklora.serialize import dumps

    quant = QuantParams(
        gamma_fp=16, bound=256, zeta=16, xi=4096, radices=(16, 16, 16), act_bound=8
    )
    sizes = {}
    for seq in (4, 8, 16):
        cfg = ModelConfig(
            layers=1,
            seq_len=seq,
            dim=4,
            mlp_dim=4,
            vocab=4,
            rank=1,
            eta=2.0**-3,
            quant=quant,
        )
        run = RunConfig(cfg, epochs=1, field_mode="test")
        key = run_key(run)
        tables = run_tables(run, key)
        weights = generate_weights(cfg, b"bench-w", TEST_MODULUS)
        adapters = init_adapters(cfg, b"bench-a", TEST_MODULUS)
        tokens = [i % cfg.vocab for i in range(seq)]
        targets = [(i + 1) % cfg.vocab for i in range(seq)]
        bundle, _ = prove_run(
            run,
            weights,
            adapters,
            [type("B", (), {"tokens": tokens, "targets": targets})()],
            blind_seed=b"bench",
            key=key,
            tables=tables,
        )
        sizes[seq] = len(dumps(bundle))
    assert sizes[4] < sizes[8] < sizes[16]
    assert sizes[8] < 2 * sizes[4]
    assert sizes[16] < 2 * sizes[8]
    assert sizes[16] < 4 * sizes[4]
