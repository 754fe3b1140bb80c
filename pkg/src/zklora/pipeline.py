"""End-to-end orchestration: prove and verify whole training runs.

The prover replays one epoch of fixed-point training, commits every
tensor the schedule names, and emits one gadget proof per step under a
per-epoch transcript.  The verifier rebuilds the same schedule from the
run configuration alone, reconstructs operand references from the
bundled commitments, replays the transcript, and checks every proof in
order -- it never re-executes the training arithmetic and never sees a
plaintext tensor.

Epochs chain through the adapters: epoch e+1's input-adapter
commitments must be byte-identical to epoch e's updated-adapter
commitments, so a bundle attests to one connected training trajectory
rather than T unrelated epochs.
"""

import math
import os
import time
from dataclasses import dataclass

from .commit import BlindingStream, Commitment, keygen, split_shape
from .field import MODULUS, TEST_MODULUS
from .gadgets import (
    TensorRef,
    commit_tensor,
    prove_elementprod,
    prove_matadd,
    prove_matmul,
    prove_rescale,
    prove_row_slice,
    prove_rsqrt,
    prove_softmax_row,
    prove_swiglu,
    prove_transpose,
    public_const,
    verify_gadget,
)
from .group import group_for_modulus
from .model import (
    _LAYER_FIELDS,
    ConfigInvalid,
    STEP_OUTPUTS,
    adapters_after_update,
    embed_tokens,
    input_names,
    one_hot_labels,
    ordered_tensor_names,
    symbolic_epoch,
    traced_epoch,
)
from .tables import build_table_set
from .transcript import Transcript

BUNDLE_VERSION = 1
MAX_SUMCHECK_DEGREE = 3
KEY_SEED = b"zklora/commitment-key/v1"


class ProveError(RuntimeError):
    """A gadget precondition failed; carries epoch/phase/step coordinates."""

    def __init__(self, epoch, phase, index, tag, output, cause):
        super().__init__(
            "epoch %d, %s step %d (%s -> %s): %s"
            % (epoch, phase, index, tag, output, cause)
        )
        self.epoch = epoch
        self.phase = phase
        self.index = index
        self.tag = tag
        self.output = output


@dataclass(frozen=True)
class RunConfig:
    """Everything the soundness of a run depends on.

    Artifact locations and benchmark switches live in the CLI layer; the
    digest of this object is what every transcript binds to.
    """

    model: object
    epochs: int = 3
    field_mode: str = "big"

    def __post_init__(self):
        if self.field_mode not in ("big", "test"):
            raise ConfigInvalid("field_mode must be 'big' or 'test'")
        if self.epochs < 1:
            raise ConfigInvalid("a run needs at least one epoch")
        q = self.model.quant
        if q.bound * q.zeta * q.gamma_fp**2 >= self.modulus:
            raise ConfigInvalid(
                "fixed-point profile does not fit the %s field" % self.field_mode
            )

    @property
    def modulus(self):
        return MODULUS if self.field_mode == "big" else TEST_MODULUS

    @property
    def group(self):
        return group_for_modulus(self.modulus)

    def digest(self):
        import hashlib

        return hashlib.sha256(
            b"zklora-run/v%d/" % BUNDLE_VERSION
            + self.model.digest()
            + self.epochs.to_bytes(4, "little")
            + self.field_mode.encode()
        ).digest()


@dataclass(frozen=True)
class SoundnessBudget:
    """Totals behind the false-accept bound (m*d_max + C)/|F| + eps.

    sumcheck_rounds counts every round of every sumcheck instance,
    including those inside lookup arguments.  lookup_checked counts, per
    lookup instance, the padded secret length plus the table length --
    the number of poles the batching challenge must avoid.  The binding
    term is zero: Pedersen binding is computational (discrete log), so
    it contributes no statistical failure probability.
    """

    sumcheck_rounds: int
    max_degree: int
    lookup_checked: int
    binding_error: int = 0

    def bound_log2(self, modulus):
        numerator = (
            self.sumcheck_rounds * self.max_degree
            + self.lookup_checked
            + self.binding_error
        )
        if numerator <= 0:
            return float("-inf")
        return math.log2(numerator) - math.log2(modulus)


@dataclass
class EpochProof:
    """One epoch's commitments (schedule order) and step proofs."""

    commitments: tuple
    step_proofs: tuple


@dataclass
class ProofBundle:
    version: int
    config_digest: bytes
    modulus: int
    budget: object
    epochs: tuple
    final_adapters: tuple


@dataclass(frozen=True)
class VerifyReport:
    ok: bool
    reason: str = ""
    budget: object = None
    bound_log2: float = 0.0


# ---------------------------------------------------------------------------
# schedule helpers


def _sym_vars(tensor):
    return ((tensor.rows - 1).bit_length(), (tensor.cols - 1).bit_length())


def _operand_name(op):
    return op[1] if op[0] == "t" else None


def step_output(step):
    """Primary output tensor name of a schedule step."""
    return step.operands[STEP_OUTPUTS[step.tag][0]][1]


def step_phase(step):
    """forward | backward | update, from the output tensor's name."""
    name = step_output(step)
    if name.startswith("bk."):
        return "backward"
    if name.startswith("up."):
        return "update"
    return "forward"


def required_vars(config, modulus):
    """Largest variable count any commitment in a run can need."""
    q = config.quant
    act = q.act_bound * q.gamma_fp
    sizes = [2 * act, act, q.zeta] + list(q.radices)
    most = max((s - 1).bit_length() for s in sizes)
    schedule = symbolic_epoch(config, modulus)
    for tensor in schedule.tensors.values():
        rv, cv = _sym_vars(tensor)
        most = max(most, rv + cv)
    return most


def run_key(run):
    """Deterministic public commitment key sized for the run."""
    return keygen(required_vars(run.model, run.modulus), KEY_SEED, run.group)


def run_tables(run, key):
    return build_table_set(run.model.quant, run.model.eps, key, run.modulus)


def frozen_weight_commitments(weights, key):
    """Deterministic commitments of the public base weights.

    Frozen tensors are committed without blinding, so anyone holding the
    published base model can recompute these and compare them to a
    bundle's w.* commitments out of band.  The verifier itself never
    consumes weights; this is the external binding check.
    """
    out = {}
    for layer, lw in enumerate(weights.layers):
        for field in _LAYER_FIELDS:
            name = "w.L%d.%s" % (layer, field)
            out[name] = commit_tensor(getattr(lw, field), key).ref.commitment
    out["w.lnf_g"] = commit_tensor(weights.lnf_g, key).ref.commitment
    out["w.lnf_b"] = commit_tensor(weights.lnf_b, key).ref.commitment
    out["w.head"] = commit_tensor(weights.head, key).ref.commitment
    return out


def _adapter_names(config):
    names = []
    for layer in range(config.layers):
        names.extend(["ad.L%d.a" % layer, "ad.L%d.b" % layer])
    return names


def _updated_names(config):
    """Where each epoch's outgoing adapters live in the tensor map."""
    if config.eta == 0:
        return _adapter_names(config)
    names = []
    for layer in range(config.layers):
        names.extend(["up.L%d.a" % layer, "up.L%d.b" % layer])
    return names


# ---------------------------------------------------------------------------
# soundness budget, recomputable from the schedule alone


def _lookup_budget(secret_vars, table_size):
    rounds = max(secret_vars, (table_size - 1).bit_length())
    checked = (1 << secret_vars) + table_size
    return rounds, checked


def _step_budget(step, var_of, params):
    """(sumcheck rounds, lookup-checked elements) one step contributes."""
    act = 2 * params.act_bound * params.gamma_fp
    resid = params.zeta

    def nvars(index):
        op = step.operands[index]
        if op[0] == "t":
            rv, cv = var_of[op[1]]
            return rv + cv
        _, rows, cols, _value, _scale = op
        return (rows - 1).bit_length() + (cols - 1).bit_length()

    tag = step.tag
    if tag == "matmul":
        a, b = step.operands[0], step.operands[1]

        def shape(op):
            if op[0] == "t":
                return var_of[op[1]]
            return ((op[1] - 1).bit_length(), (op[2] - 1).bit_length())

        d0, d1 = shape(a)
        _, d2 = shape(b)
        return d0 + d1 + d2, 0
    if tag == "elementprod":
        return nvars(2), 0
    if tag in ("matadd", "transpose", "row_slice"):
        return 0, 0
    if tag == "rescale":
        n = nvars(0)
        r1, c1 = _lookup_budget(n, act)
        r2, c2 = _lookup_budget(n, resid)
        return r1 + r2, c1 + c2
    if tag == "swiglu":
        n = nvars(0)
        r1, c1 = _lookup_budget(n, act)
        r2, c2 = _lookup_budget(n, resid)
        return r1 + r2, c1 + c2
    if tag == "rsqrt":
        n = nvars(0)
        return _lookup_budget(n, act // 2)
    if tag == "softmax_row":
        n = nvars(0)
        rounds = checked = 0
        for radix in params.radices:
            r, c = _lookup_budget(n, radix)
            rounds += r
            checked += c
        links = params.num_radices - 1
        rq, cq = _lookup_budget(n, act)
        rr, cr = _lookup_budget(n, resid)
        rounds += links * (n + rq + rr)
        checked += links * (cq + cr)
        return rounds, checked
    raise ValueError("unknown gadget tag %r" % tag)


def epoch_budget(config, modulus):
    """Budget of a single epoch, walked from the symbolic schedule."""
    schedule = symbolic_epoch(config, modulus)
    var_of = {name: _sym_vars(t) for name, t in schedule.tensors.items()}
    rounds = checked = 0
    for step in schedule.steps:
        r, c = _step_budget(step, var_of, config.quant)
        rounds += r
        checked += c
    return SoundnessBudget(rounds, MAX_SUMCHECK_DEGREE, checked)


def run_budget(run):
    per_epoch = epoch_budget(run.model, run.modulus)
    return SoundnessBudget(
        per_epoch.sumcheck_rounds * run.epochs,
        MAX_SUMCHECK_DEGREE,
        per_epoch.lookup_checked * run.epochs,
    )


# ---------------------------------------------------------------------------
# prover


def _epoch_transcript(run, epoch):
    return Transcript(
        b"zklora/epoch",
        run.modulus,
        seed=run.digest() + epoch.to_bytes(4, "little"),
    )


def _absorb_epoch(tr, tables, names, refs, group):
    tr.append(b"pipeline/tables", tables.digest)
    for name, ref in zip(names, refs):
        tr.append(b"pipeline/tensor", name.encode())
        tr.append(b"pipeline/commitment", ref.digest(group))


def _prove_step(step, operands, builder, tables, key, tr, rng):
    tag = step.tag
    if tag == "matmul":
        return prove_matmul(operands[0], operands[1], operands[2], key, tr, rng)
    if tag == "matadd":
        return prove_matadd(
            operands[0], operands[1], operands[2], step.get("sign"), key, tr, rng
        )
    if tag == "elementprod":
        return prove_elementprod(operands[0], operands[1], operands[2], key, tr, rng)
    if tag == "transpose":
        return prove_transpose(operands[0], operands[1], key, tr, rng)
    if tag == "row_slice":
        return prove_row_slice(operands[0], step.get("row"), operands[1], key, tr, rng)
    if tag == "rescale":
        return prove_rescale(
            operands[0],
            operands[1],
            operands[2],
            step.get("divisor"),
            tables,
            key,
            tr,
            rng,
        )
    if tag == "swiglu":
        return prove_swiglu(
            operands[0],
            operands[1],
            operands[2],
            operands[3],
            step.get("mode"),
            tables,
            key,
            tr,
            rng,
        )
    if tag == "rsqrt":
        return prove_rsqrt(operands[0], operands[1], tables, key, tr, rng)
    if tag == "softmax_row":
        witness = builder.aux[step.operands[1][1]]
        return prove_softmax_row(
            operands[0], operands[1], witness, tables, key, tr, rng
        )
    raise ValueError("unknown gadget tag %r" % tag)


def prove_run(
    run,
    weights,
    adapters,
    batches,
    blind_seed=None,
    key=None,
    tables=None,
    stats=None,
):
    """Run `run.epochs` training epochs and prove every step of each.

    batches cycle if fewer than the epoch count; blind_seed randomizes
    every hiding commitment (os.urandom when omitted).  Returns (bundle,
    final adapters).  `stats`, when a dict, receives commit/prove timing
    per phase for benchmarking.
    """
    if not batches:
        raise ConfigInvalid("at least one dataset batch is required")
    p = run.modulus
    cfg = run.model
    if key is None:
        key = run_key(run)
    if tables is None:
        tables = run_tables(run, key)
    if blind_seed is None:
        blind_seed = os.urandom(32)
    names = None
    carry = {}
    current = adapters
    epoch_proofs = []
    timing = {
        "commit_s": 0.0,
        "prove_forward_s": 0.0,
        "prove_backward_s": 0.0,
        "prove_update_s": 0.0,
    }

    for epoch in range(run.epochs):
        batch = batches[epoch % len(batches)]
        x0 = embed_tokens(batch.tokens, weights, cfg, p)
        y = one_hot_labels(batch.targets, cfg, p)
        builder = traced_epoch(weights, current, x0, y, cfg, p)
        if names is None:
            names = ordered_tensor_names(builder.steps, input_names(cfg))
        rng = BlindingStream(
            b"zklora/blind/" + blind_seed + epoch.to_bytes(4, "little"), p
        )

        started = time.perf_counter()
        committed = {}
        for name in names:
            if name in carry:
                committed[name] = carry[name]
                continue
            role = builder.roles.get(name, "blinded")
            committed[name] = commit_tensor(
                builder.tensors[name], key, None if role == "frozen" else rng
            )
        timing["commit_s"] += time.perf_counter() - started

        tr = _epoch_transcript(run, epoch)
        _absorb_epoch(
            tr, tables, names, [committed[n].ref for n in names], key.group
        )

        step_proofs = []
        for index, step in enumerate(builder.steps):
            operands = [
                committed[op[1]]
                if op[0] == "t"
                else public_const(op[1], op[2], op[3], cfg.quant, p, op[4])
                for op in step.operands
            ]
            started = time.perf_counter()
            try:
                proof = _prove_step(step, operands, builder, tables, key, tr, rng)
            except Exception as exc:
                raise ProveError(
                    epoch, step_phase(step), index, step.tag, step_output(step), exc
                ) from exc
            timing["prove_%s_s" % step_phase(step)] += time.perf_counter() - started
            step_proofs.append(proof)

        epoch_proofs.append(
            EpochProof(
                commitments=tuple(committed[n].ref.commitment for n in names),
                step_proofs=tuple(step_proofs),
            )
        )
        carry = {
            ad: committed[up]
            for ad, up in zip(_adapter_names(cfg), _updated_names(cfg))
        }
        current = adapters_after_update(builder, current)

    final_adapters = tuple(carry[name].ref.commitment for name in _adapter_names(cfg))
    if stats is not None:
        timing["prove_s"] = (
            timing["prove_forward_s"]
            + timing["prove_backward_s"]
            + timing["prove_update_s"]
        )
        stats.update(timing)
    bundle = ProofBundle(
        version=BUNDLE_VERSION,
        config_digest=run.digest(),
        modulus=p,
        budget=run_budget(run),
        epochs=tuple(epoch_proofs),
        final_adapters=final_adapters,
    )
    return bundle, current


# ---------------------------------------------------------------------------
# verifier


def _reject(epoch, index, step, detail):
    return VerifyReport(
        False,
        "epoch %d, %s step %d (%s -> %s): %s"
        % (epoch, step_phase(step), index, step.tag, step_output(step), detail),
    )


def _check_commitment(com, num_vars, group):
    if not isinstance(com, Commitment):
        return False
    if com.num_vars != num_vars:
        return False
    rows, _ = split_shape(num_vars)
    if not isinstance(com.rows, tuple) or len(com.rows) != rows:
        return False
    return all(
        isinstance(r, int) and 1 <= r < group.q for r in com.rows
    )


def _pinned_mismatch(step, proof, refs_by_name):
    """Schedule-pinned proof parameters the gadget itself cannot check."""
    tag = step.tag
    if tag == "rescale" and proof.divisor != step.get("divisor"):
        return "divisor %r differs from schedule" % (proof.divisor,)
    if tag == "matadd" and proof.sign != step.get("sign"):
        return "sign %r differs from schedule" % (proof.sign,)
    if tag == "row_slice" and proof.row != step.get("row"):
        return "row %r differs from schedule" % (proof.row,)
    if tag == "swiglu":
        if proof.mode != step.get("mode"):
            return "mode %r differs from schedule" % (proof.mode,)
        narrow = refs_by_name[step.operands[2][1]]
        resid = refs_by_name[step.operands[3][1]]
        if proof.narrow_ref != narrow or proof.resid_ref != resid:
            return "witness tensors differ from their scheduled commitments"
    return None


def verify_run(bundle, run, key=None, tables=None):
    """Check a proof bundle against a run configuration.

    Consumes only the bundle, the public tables, the commitment key, and
    the configuration -- never weights, datasets, or activations.
    """
    try:
        return _verify_run_checked(bundle, run, key, tables)
    except Exception as exc:  # malformed bundles must reject, not crash
        return VerifyReport(False, "malformed bundle: %s" % exc)


def _verify_run_checked(bundle, run, key, tables):
    p = run.modulus
    cfg = run.model
    group = run.group
    if bundle.version != BUNDLE_VERSION:
        return VerifyReport(False, "unsupported bundle version %r" % bundle.version)
    if bundle.config_digest != run.digest():
        return VerifyReport(False, "bundle was produced for a different run config")
    if bundle.modulus != p:
        return VerifyReport(False, "bundle field does not match the run config")

    expected_budget = run_budget(run)
    if bundle.budget != expected_budget:
        return VerifyReport(
            False,
            "soundness budget %r does not match the schedule's %r"
            % (bundle.budget, expected_budget),
        )
    if len(bundle.epochs) != run.epochs:
        return VerifyReport(
            False,
            "bundle has %d epochs, config requires %d"
            % (len(bundle.epochs), run.epochs),
        )

    if key is None:
        key = run_key(run)
    if tables is None:
        tables = run_tables(run, key)

    schedule = symbolic_epoch(cfg, p)
    names = ordered_tensor_names(schedule.steps, input_names(cfg))
    shapes = {name: _sym_vars(schedule.tensors[name]) for name in names}
    adapter_names = _adapter_names(cfg)
    updated_names = _updated_names(cfg)

    chain = None
    for epoch, ep in enumerate(bundle.epochs):
        if len(ep.commitments) != len(names):
            return VerifyReport(
                False, "epoch %d: expected %d commitments, bundle has %d"
                % (epoch, len(names), len(ep.commitments)),
            )
        refs = {}
        for name, com in zip(names, ep.commitments):
            rv, cv = shapes[name]
            if not _check_commitment(com, rv + cv, group):
                return VerifyReport(
                    False,
                    "epoch %d: commitment for %s is malformed" % (epoch, name),
                )
            refs[name] = TensorRef("committed", rv, cv, commitment=com)
        if chain is not None:
            for name in adapter_names:
                if refs[name].commitment != chain[name]:
                    return VerifyReport(
                        False,
                        "epoch %d: adapter %s does not chain from the previous "
                        "epoch's update" % (epoch, name),
                    )

        tr = _epoch_transcript(run, epoch)
        _absorb_epoch(tr, tables, names, [refs[n] for n in names], group)

        if len(ep.step_proofs) != len(schedule.steps):
            return VerifyReport(
                False,
                "epoch %d: expected %d proofs, bundle has %d"
                % (epoch, len(schedule.steps), len(ep.step_proofs)),
            )
        for index, (step, proof) in enumerate(zip(schedule.steps, ep.step_proofs)):
            if getattr(proof, "tag", None) != step.tag:
                return _reject(
                    epoch, index, step, "proof tag %r" % getattr(proof, "tag", None)
                )
            mismatch = _pinned_mismatch(step, proof, refs)
            if mismatch:
                return _reject(epoch, index, step, mismatch)
            operand_count = 2 if step.tag == "swiglu" else len(step.operands)
            operand_refs = []
            for op in step.operands[:operand_count]:
                if op[0] == "t":
                    operand_refs.append(refs[op[1]])
                else:
                    operand_refs.append(
                        public_const(op[1], op[2], op[3], cfg.quant, p, op[4]).ref
                    )
            if not verify_gadget(proof, operand_refs, tables, key, tr):
                return _reject(epoch, index, step, "proof rejected")

        chain = {
            ad: refs[up].commitment
            for ad, up in zip(adapter_names, updated_names)
        }

    if len(bundle.final_adapters) != len(adapter_names):
        return VerifyReport(False, "final adapter commitment count is wrong")
    for name, com in zip(adapter_names, bundle.final_adapters):
        if com != chain[name]:
            return VerifyReport(
                False,
                "final commitment for %s does not match the last update" % name,
            )

    return VerifyReport(
        True,
        "",
        budget=bundle.budget,
        bound_log2=bundle.budget.bound_log2(p),
    )
