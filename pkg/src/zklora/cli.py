"""Command line interface: setup, prove, verify, and bench.

Exit codes: 0 accept/success, 1 proof rejected, 2 usage or bad input
files, 3 internal error (including prover-side range failures).

The configuration file is INI ``key = value`` sections::

    [model]
    layers = 1
    seq_len = 2
    dim = 4
    mlp_dim = 4
    vocab = 4
    rank = 1
    eta = 2^-3
    eps = 1e-5

    [quant]
    gamma_fp = 16
    bound = 256
    zeta = 16
    xi = 4096
    radices = 16,16,16
    act_bound = 8

    [run]
    epochs = 3
    field = test
    seed = 00ff..   ; optional hex blinding seed (prover-private)

    [paths]
    out = runs/demo
    dataset = corpus.txt
    vocab = runs/demo/vocab.txt   ; derived from the dataset at setup if absent

Omitted keys fall back to the defaults baked into the model and
fixed-point profile dataclasses.  The verify command reads only the
bundle, the commitment key, the lookup tables, and the configuration --
never weights, adapters, datasets, or vocab files.
"""

import argparse
import configparser
import dataclasses
import os
import sys
import time
import tracemalloc

from .dataset import (
    DatasetBatch,
    EmptyDataset,
    VocabTooLarge,
    build_vocab,
    ingest_dataset,
    save_vocab,
    tokenize,
    windows,
)
from .model import (
    ConfigInvalid,
    IOFailure,
    ModelConfig,
    TokenOutOfVocab,
    generate_weights,
    init_adapters,
    load_weights,
    save_weights,
)
from .pipeline import (
    ProveError,
    RunConfig,
    prove_run,
    run_key,
    run_tables,
    verify_run,
)
from .quantize import QuantParams
from .serialize import (
    ParseError,
    dumps,
    load_bundle,
    load_key,
    save_bundle,
    save_key,
)
from .tables import load_table_set, save_table_set

EXIT_ACCEPT = 0
EXIT_REJECT = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration


def _parse_number(text):
    """Accept '0.125', '1e-5', and the power form '2^-3'."""
    text = text.strip()
    if "^" in text:
        base, _, exponent = text.partition("^")
        return float(base) ** float(exponent)
    return float(text)


def _section(parser, name):
    return parser[name] if parser.has_section(name) else {}


@dataclasses.dataclass(frozen=True)
class Paths:
    out: str

    @property
    def key(self):
        return os.path.join(self.out, "key.zkck")

    @property
    def tables(self):
        return os.path.join(self.out, "tables")

    @property
    def model(self):
        return os.path.join(self.out, "model.zkwt")

    @property
    def model_final(self):
        return os.path.join(self.out, "model_final.zkwt")

    @property
    def bundle(self):
        return os.path.join(self.out, "bundle.zklb")


@dataclasses.dataclass(frozen=True)
class Settings:
    run: RunConfig
    paths: Paths
    dataset: str
    vocab: str
    weights_seed: bytes
    adapters_seed: bytes
    blind_seed: bytes


def load_settings(config_path, field=None, out=None):
    if not os.path.exists(config_path):
        raise UsageError("config file %s does not exist" % config_path)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read(config_path)
    except configparser.Error as exc:
        raise UsageError("bad config file: %s" % exc) from None

    quant_kwargs = {}
    quant_section = _section(parser, "quant")
    for field_name in ("gamma_fp", "bound", "zeta", "xi", "act_bound"):
        if field_name in quant_section:
            quant_kwargs[field_name] = int(quant_section[field_name])
    if "radices" in quant_section:
        quant_kwargs["radices"] = tuple(
            int(r) for r in quant_section["radices"].split(",")
        )

    model_kwargs = {}
    model_section = _section(parser, "model")
    for field_name in ("layers", "seq_len", "dim", "mlp_dim", "vocab", "rank"):
        if field_name in model_section:
            model_kwargs[field_name] = int(model_section[field_name])
    for field_name in ("eta", "eps"):
        if field_name in model_section:
            model_kwargs[field_name] = _parse_number(model_section[field_name])

    run_section = _section(parser, "run")
    epochs = int(run_section.get("epochs", 3))
    field_mode = field or run_section.get("field", "big")
    blind_seed = bytes.fromhex(run_section.get("seed", "")) or None

    try:
        model = ModelConfig(quant=QuantParams(**quant_kwargs), **model_kwargs)
        run = RunConfig(model, epochs=epochs, field_mode=field_mode)
    except (ConfigInvalid, ValueError, TypeError) as exc:
        raise UsageError("invalid configuration: %s" % exc) from None

    # relative paths anchor at the config file, not the working directory
    base = os.path.dirname(os.path.abspath(config_path))

    def resolve(path):
        return path and os.path.join(base, path)

    paths_section = _section(parser, "paths")
    out_dir = out or resolve(paths_section.get("out", "zklora-out"))
    return Settings(
        run=run,
        paths=Paths(out_dir),
        dataset=resolve(paths_section.get("dataset", "")),
        vocab=resolve(paths_section.get("vocab", ""))
        or os.path.join(out_dir, "vocab.txt"),
        weights_seed=run_section.get("weights_seed", "base-weights").encode(),
        adapters_seed=run_section.get("adapters_seed", "adapter-init").encode(),
        blind_seed=blind_seed,
    )


# ---------------------------------------------------------------------------
# commands


def cmd_setup(settings):
    run = settings.run
    cfg = run.model
    os.makedirs(settings.paths.out, exist_ok=True)
    key = run_key(run)
    save_key(key, settings.paths.key)
    tables = run_tables(run, key)
    written = save_table_set(tables, settings.paths.tables)
    weights = generate_weights(cfg, settings.weights_seed, run.modulus)
    adapters = init_adapters(cfg, settings.adapters_seed, run.modulus)
    save_weights(settings.paths.model, weights, adapters, cfg, run.modulus)
    if not os.path.exists(settings.vocab):
        if settings.dataset and os.path.exists(settings.dataset):
            with open(settings.dataset, encoding="utf-8") as fh:
                save_vocab(build_vocab(fh.read(), cfg.vocab), settings.vocab)
            print("vocab derived from dataset: %s" % settings.vocab)
        else:
            print("no dataset configured; vocab not written")
    print("commitment key: %s" % settings.paths.key)
    print("lookup tables (%d): %s" % (len(written), settings.paths.tables))
    print("model (weights + adapters): %s" % settings.paths.model)
    return EXIT_ACCEPT


def _load_public_artifacts(settings):
    run = settings.run
    key = load_key(settings.paths.key)
    tables = load_table_set(
        settings.paths.tables,
        run.model.quant,
        run.model.eps,
        key,
        run.modulus,
    )
    return key, tables


def _batches(settings):
    cfg = settings.run.model
    if settings.dataset and os.path.exists(settings.dataset):
        if os.path.exists(settings.vocab):
            return ingest_dataset(
                settings.dataset, settings.vocab, cfg.seq_len, vocab_limit=cfg.vocab
            )
        # no vocab file yet (e.g. bench without setup): derive in memory
        with open(settings.dataset, encoding="utf-8") as fh:
            text = fh.read()
        return windows(tokenize(text, build_vocab(text, cfg.vocab)), cfg.seq_len)
    # no dataset configured: one deterministic synthetic batch
    tokens = tuple(i % cfg.vocab for i in range(cfg.seq_len))
    targets = tuple((i + 1) % cfg.vocab for i in range(cfg.seq_len))
    return [DatasetBatch(tokens, targets)]


def cmd_prove(settings):
    run = settings.run
    key, tables = _load_public_artifacts(settings)
    weights, adapters = load_weights(settings.paths.model, run.model, run.modulus)
    batches = _batches(settings)
    stats = {}
    bundle, final = prove_run(
        run,
        weights,
        adapters,
        batches,
        blind_seed=settings.blind_seed,
        key=key,
        tables=tables,
        stats=stats,
    )
    size = save_bundle(bundle, settings.paths.bundle)
    # resume-ready: the same frozen weights with the updated adapters
    save_weights(settings.paths.model_final, weights, final, run.model, run.modulus)
    print("bundle: %s" % settings.paths.bundle)
    print("final model: %s" % settings.paths.model_final)
    print("bundle_size=%d bytes" % size)
    for name in (
        "commit_s",
        "prove_forward_s",
        "prove_backward_s",
        "prove_update_s",
        "prove_s",
    ):
        print("%s=%.3f s" % (name, stats[name]))
    return EXIT_ACCEPT


def cmd_verify(settings):
    run = settings.run
    key, tables = _load_public_artifacts(settings)
    try:
        bundle = load_bundle(settings.paths.bundle)
    except ParseError as exc:
        print("reject: malformed bundle: %s" % exc)
        return EXIT_REJECT
    report = verify_run(bundle, run, key, tables)
    if not report.ok:
        print("reject: %s" % report.reason)
        return EXIT_REJECT
    print("accept")
    print("budget_sumcheck_rounds=%d rounds" % report.budget.sumcheck_rounds)
    print("budget_max_degree=%d degree" % report.budget.max_degree)
    print("budget_lookup_checked=%d elements" % report.budget.lookup_checked)
    print("soundness_bound_log2=%.2f log2" % report.bound_log2)
    return EXIT_ACCEPT


def cmd_bench(settings):
    run = settings.run
    tracemalloc.start()
    started = time.perf_counter()
    key = run_key(run)
    tables = run_tables(run, key)
    setup_s = time.perf_counter() - started

    weights = generate_weights(run.model, settings.weights_seed, run.modulus)
    adapters = init_adapters(run.model, settings.adapters_seed, run.modulus)
    batches = _batches(settings)

    stats = {}
    bundle, _final = prove_run(
        run,
        weights,
        adapters,
        batches,
        blind_seed=settings.blind_seed,
        key=key,
        tables=tables,
        stats=stats,
    )
    data = dumps(bundle)

    started = time.perf_counter()
    report = verify_run(bundle, run, key, tables)
    verify_s = time.perf_counter() - started
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    if not report.ok:
        print("reject: %s" % report.reason)
        return EXIT_REJECT

    metrics = [
        ("setup_s", "%.3f" % setup_s, "s"),
        ("commit_s", "%.3f" % stats["commit_s"], "s"),
        ("prove_forward_s", "%.3f" % stats["prove_forward_s"], "s"),
        ("prove_backward_s", "%.3f" % stats["prove_backward_s"], "s"),
        ("prove_update_s", "%.3f" % stats["prove_update_s"], "s"),
        ("prove_s", "%.3f" % stats["prove_s"], "s"),
        ("verify_s", "%.3f" % verify_s, "s"),
        ("bundle_size", "%d" % len(data), "bytes"),
        ("peak_memory", "%d" % peak, "bytes"),
        ("epochs", "%d" % run.epochs, "count"),
    ]
    for name, value, unit in metrics:
        print("%s=%s %s" % (name, value, unit))
    print()
    width_name = max(len(m[0]) for m in metrics)
    width_value = max(len(m[1]) for m in metrics)
    print("%-*s  %*s  %s" % (width_name, "metric", width_value, "value", "unit"))
    for name, value, unit in metrics:
        print("%-*s  %*s  %s" % (width_name, name, width_value, value, unit))
    return EXIT_ACCEPT


# ---------------------------------------------------------------------------
# entry point


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="zklora",
        description="Prove and verify fixed-point LoRA training runs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in (
        ("setup", cmd_setup),
        ("prove", cmd_prove),
        ("verify", cmd_verify),
        ("bench", cmd_bench),
    ):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="INI configuration file")
        cmd.add_argument("--field", choices=("big", "test"), default=None)
        cmd.add_argument("--out", default=None, help="artifact directory override")
        cmd.set_defaults(func=func)
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_ACCEPT
    try:
        settings = load_settings(args.config, field=args.field, out=args.out)
        return args.func(settings)
    except UsageError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    except (
        FileNotFoundError,
        IsADirectoryError,
        PermissionError,
        ParseError,
        IOFailure,
        ConfigInvalid,
        EmptyDataset,
        VocabTooLarge,
        TokenOutOfVocab,
    ) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    except ProveError as exc:
        print("prover failure: %s" % exc, file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - defensive
        print("internal error: %s" % exc, file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
