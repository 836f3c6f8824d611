"""Measurement chains, improper mixtures, relative states, ensemble updates.

Everything here is phrased over labeled multipartite states: a chain link
appends one instrument subsystem, a decomposition of the identity on one
subsystem splits the state of the remaining subsystems into weighted
branches, and conditioning on a projector gives the relative (conditional)
state of the opposite subsystems.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass

import numpy as np

from .branches import Branch, BranchDecomposition
from .errors import (
    DimensionMismatchError,
    InvalidDecompositionError,
    LayoutConflictError,
    NotAProjectorError,
    ObservableMismatchError,
    UndefinedConditionalError,
    ZeroSampleError,
)
from .hilbert import (
    DensityOperator,
    State,
    StateVector,
    SubsystemLayout,
    embed_operator,
    partial_scalar_product,
    partial_trace_matrix,
)
from .observables import DecompositionOfIdentity, SpectralObservable, check_decomposition, is_projector
from .premeasurement import Premeasurement, evolve
from .tolerances import DEFAULT, Tolerances


@dataclass(frozen=True)
class WeightedEnsemble:
    """Proper mixture: a classical list of (weight, pure state) members."""

    members: tuple[tuple[float, StateVector], ...]
    tol: InitVar[Tolerances] = DEFAULT

    def __post_init__(self, tol: Tolerances):
        members = tuple((float(w), s) for w, s in self.members)
        object.__setattr__(self, "members", members)
        if not members:
            raise ValueError("ensemble needs at least one member")
        lay = members[0][1].layout
        for w, s in members:
            if w <= 0.0:
                raise ValueError(f"member weight {w} must be positive")
            if s.layout != lay:
                raise LayoutConflictError("ensemble members live on different layouts")
            if not s.normalized:
                raise ValueError("ensemble members must be normalized")
        total = sum(w for w, _ in members)
        if abs(total - 1.0) > tol.reconstruction:
            raise ValueError(f"member weights sum to {total!r}, not 1")

    @property
    def layout(self) -> SubsystemLayout:
        return self.members[0][1].layout

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(w for w, _ in self.members)

    def density(self, tol: Tolerances = DEFAULT) -> DensityOperator:
        """The mixture sum_k w_k |Psi_k><Psi_k| (decomposition forgotten)."""
        d = self.layout.dim
        rho = np.zeros((d, d), dtype=complex)
        for w, s in self.members:
            rho += w * np.outer(s.amplitudes, s.amplitudes.conj())
        return DensityOperator(self.layout, rho, tol=tol)


@dataclass(frozen=True)
class UpdatedMember:
    index: int
    weight: float
    state: DensityOperator


@dataclass(frozen=True)
class EnsembleUpdateResult:
    """Re-weighted ensemble after an event occurred on the subject subsystem."""

    members: tuple[UpdatedMember, ...]
    aggregate: DensityOperator
    occurrence_probability: float

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(m.weight for m in self.members)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(m.index for m in self.members)


@dataclass(frozen=True)
class MonteCarloUpdate:
    """Empirical counterpart of an ensemble update.

    Sampling order (fixed for reproducibility): one array of member indices
    drawn with the prior weights, then one array of uniform coins compared
    against each drawn member's occurrence probability.  Counts from shards
    run with different seeds may be summed before forming weights.
    """

    member_counts: tuple[int, ...]
    accepted_counts: tuple[int, ...]
    n_samples: int
    seed: int

    @property
    def weights(self) -> tuple[float, ...]:
        total = sum(self.accepted_counts)
        return tuple(c / total for c in self.accepted_counts)

    @staticmethod
    def merged(parts: "list[MonteCarloUpdate]") -> "MonteCarloUpdate":
        """Combine shards by summing counts; the result ignores shard order.

        The merged seed is reported as -1 since no single generator stream
        produced the union.
        """
        if not parts:
            raise ZeroSampleError("nothing to merge")
        k = len(parts[0].member_counts)
        if any(len(p.member_counts) != k for p in parts):
            raise DimensionMismatchError("shards disagree on member count")
        member = tuple(sum(p.member_counts[i] for p in parts) for i in range(k))
        accepted = tuple(sum(p.accepted_counts[i] for p in parts) for i in range(k))
        return MonteCarloUpdate(member, accepted, sum(p.n_samples for p in parts), -1)


def _dense(state: State) -> np.ndarray:
    if isinstance(state, StateVector):
        return np.outer(state.amplitudes, state.amplitudes.conj())
    return state.matrix


def _keep_positions(lay: SubsystemLayout, remove: set[str]) -> list[int]:
    return [i for i, label in enumerate(lay.labels) if label not in remove]


def observables_match(
    a: SpectralObservable, b: SpectralObservable, atol: float = 1e-8
) -> bool:
    """Same subsystem, same branch structure within a small tolerance."""
    if a.subsystem != b.subsystem or a.branch_count != b.branch_count:
        return False
    for x, y in zip(a.branches, b.branches):
        if abs(x.eigenvalue - y.eigenvalue) > atol:
            return False
        if np.linalg.norm(x.projector - y.projector) > atol * a.dim:
            return False
    return True


def extend_chain(
    state: StateVector,
    pm: Premeasurement,
    measured_source: SpectralObservable | None = None,
    tol: Tolerances = DEFAULT,
) -> StateVector:
    """Append one chain link: apply ``pm`` to one subsystem of a composite state.

    The premeasurement's object label must name a subsystem of ``state``; its
    instrument is appended as a new trailing subsystem.  ``measured_source``
    (typically the previous link's pointer observable) is checked against
    what ``pm`` measures.
    """
    lay = state.layout
    if pm.object_label not in lay.labels:
        raise LayoutConflictError(f"state has no subsystem {pm.object_label!r}")
    if pm.instrument_label in lay.labels:
        raise LayoutConflictError(f"label {pm.instrument_label!r} already in use")
    if lay.dim_of(pm.object_label) != pm.object_dim:
        raise DimensionMismatchError("object subsystem dimension mismatch")
    if measured_source is not None and not observables_match(measured_source, pm.measured):
        raise ObservableMismatchError(
            "link does not measure the previous link's pointer observable"
        )
    others = [label for label in lay.labels if label != pm.object_label]
    moved = state.reorder(others + [pm.object_label]) if others else state
    amps = np.kron(moved.amplitudes, pm.ready_state.amplitudes)
    d_rest = int(np.prod([lay.dim_of(label) for label in others])) if others else 1
    full_u = np.kron(np.eye(d_rest, dtype=complex), pm.unitary)
    extended_layout = moved.layout.concat(
        SubsystemLayout(((pm.instrument_label, pm.instrument_dim),))
    )
    out = StateVector(extended_layout, full_u @ amps, normalized=True, tol=tol)
    return out.reorder(list(lay.labels) + [pm.instrument_label])


def run_two_link_chain(
    pm1: Premeasurement,
    pm2: Premeasurement,
    object_state: StateVector,
    tol: Tolerances = DEFAULT,
) -> tuple[StateVector, StateVector]:
    """Two-link von Neumann chain: measure, then read the pointer.

    ``pm2`` must measure ``pm1``'s pointer observable (second link reads the
    first link's result).  Returns (intermediate, final) states.
    """
    intermediate = evolve(pm1, object_state, tol=tol)
    final = extend_chain(intermediate, pm2, measured_source=pm1.pointer, tol=tol)
    return intermediate, final


def improper_mixture(
    state: State, d: DecompositionOfIdentity, tol: Tolerances = DEFAULT
) -> BranchDecomposition:
    """Decompose the reduced state of the opposite subsystems over ``d``.

    Weights are the occurrence probabilities tr(rho P_n); components are the
    conditional states tr_subject(rho P_n) / w_n.  The weighted components
    resum to the plain reduced state; the decomposition has meaning only
    relative to the traced-out subject subsystem.
    """
    report = check_decomposition(d, tol)
    if not report.passed:
        raise InvalidDecompositionError(
            f"projectors are not a decomposition of the identity: {report}"
        )
    lay = state.layout
    keep = _keep_positions(lay, {d.subsystem})
    if not keep:
        raise LayoutConflictError("decomposition subsystem is the whole layout")
    rho = _dense(state)
    reduced_layout = lay.restricted(set(lay.labels) - {d.subsystem})
    kept: list[Branch] = []
    dropped = 0.0
    for n, p in enumerate(d.projectors):
        emb = embed_operator(p, d.subsystem, lay)
        prod = rho @ emb
        w = float(np.real(np.trace(prod)))
        if w > tol.weight:
            comp = partial_trace_matrix(prod, lay.dims, keep) / w
            kept.append(Branch(n, w, DensityOperator(reduced_layout, comp, tol=tol)))
        else:
            dropped += max(w, 0.0)
    return BranchDecomposition(d.subsystem, tuple(kept), dropped, tol=tol)


def conditional_state(
    rho: DensityOperator,
    p: np.ndarray,
    subject: str,
    form: str = "plain",
    tol: Tolerances = DEFAULT,
) -> DensityOperator:
    """State of the opposite subsystems given the event P on the subject.

    ``form="plain"`` computes tr_subject(rho P) / tr(rho P); ``form="sandwich"``
    computes tr_subject(P rho P) / tr(P rho P).  The two agree by idempotency
    and under-partial-trace commutativity.
    """
    if form not in ("plain", "sandwich"):
        raise ValueError(f"unknown form {form!r}")
    if not is_projector(p, tol):
        raise NotAProjectorError("conditioning event must be a projector")
    lay = rho.layout
    keep = _keep_positions(lay, {subject})
    if not keep:
        raise LayoutConflictError("subject subsystem is the whole layout")
    emb = embed_operator(p, subject, lay)
    if form == "plain":
        prod = rho.matrix @ emb
    else:
        prod = emb @ rho.matrix @ emb
    w = float(np.real(np.trace(prod)))
    if w <= tol.weight:
        raise UndefinedConditionalError(
            f"event has probability {w!r}; conditional state undefined"
        )
    reduced = partial_trace_matrix(prod, lay.dims, keep) / w
    reduced_layout = lay.restricted(set(lay.labels) - {subject})
    return DensityOperator(reduced_layout, reduced, tol=tol)


def relative_state(
    psi: StateVector,
    subject: str,
    subject_vector: np.ndarray,
    tol: Tolerances = DEFAULT,
) -> StateVector:
    """Normalized component of ``psi`` in relation to one subject vector.

    Computed as the normalized partial scalar product <phi_subject | psi>;
    defined up to a phase, so compare results as projectors.
    """
    subject_vector = np.asarray(subject_vector, dtype=complex)
    n = np.linalg.norm(subject_vector)
    if abs(n - 1.0) > 1e-8:
        raise ValueError(f"subject vector must be a unit vector, got norm {n!r}")
    coeff = partial_scalar_product(subject_vector, subject, psi)
    if coeff.norm() <= tol.weight:
        raise UndefinedConditionalError(
            "subject vector has vanishing overlap with the state"
        )
    return coeff.normalize()


def world_branches(
    state: StateVector, pointer: SpectralObservable, tol: Tolerances = DEFAULT
) -> BranchDecomposition:
    """Branch states of everything else, relative to each pointer position.

    When the state factorizes between the pointer subsystem and the rest,
    every branch carries one and the same component state; entanglement with
    the pointer makes the branch components differ.
    """
    return improper_mixture(state, pointer.decomposition(), tol=tol)


def tripartite_conditional_consistency(
    rho: DensityOperator,
    p: np.ndarray,
    subject: str,
    environment: str,
    tol: Tolerances = DEFAULT,
) -> tuple[DensityOperator, DensityOperator]:
    """Conditional state of the object computed along two routes.

    Route one conditions the full state, tracing out subject and environment
    together; route two first reduces over the environment and then
    conditions.  Both agree, which is why conditioning is well defined on
    improper mixtures.
    """
    if not is_projector(p, tol):
        raise NotAProjectorError("conditioning event must be a projector")
    lay = rho.layout
    keep = _keep_positions(lay, {subject, environment})
    if not keep:
        raise LayoutConflictError("no object subsystems left")
    emb = embed_operator(p, subject, lay)
    prod = rho.matrix @ emb
    w = float(np.real(np.trace(prod)))
    if w <= tol.weight:
        raise UndefinedConditionalError(f"event has probability {w!r}")
    object_layout = lay.restricted(set(lay.labels) - {subject, environment})
    via_full = DensityOperator(
        object_layout, partial_trace_matrix(prod, lay.dims, keep) / w, tol=tol
    )
    keep_ab = _keep_positions(lay, {environment})
    rho_ab = DensityOperator(
        lay.restricted(set(lay.labels) - {environment}),
        partial_trace_matrix(rho.matrix, lay.dims, keep_ab),
        tol=tol,
    )
    via_reduced = conditional_state(rho_ab, p, subject, form="plain", tol=tol)
    return via_full, via_reduced


def proper_mixture(bd: BranchDecomposition, tol: Tolerances = DEFAULT) -> WeightedEnsemble:
    """Read a branch decomposition as a classical ensemble of pure states.

    This is the quasi-classical reading of a complete measurement: each
    branch becomes an independently prepared member with its Born weight.
    Dropped weight is renormalized away.  All components must be pure.
    """
    members = []
    scale = 1.0 - bd.dropped_weight
    for b in bd.branches:
        if not isinstance(b.component, StateVector):
            raise TypeError("proper_mixture needs pure branch components")
        members.append((b.weight / scale, b.component))
    return WeightedEnsemble(tuple(members), tol=tol)


def ensemble_update(
    ens: WeightedEnsemble, p: np.ndarray, subject: str, tol: Tolerances = DEFAULT
) -> EnsembleUpdateResult:
    """Re-weight a proper mixture after the event P occurred on the subject.

    New weights are w_k * <Psi_k|P|Psi_k> renormalized by the total
    occurrence probability; members that never trigger the event are
    dropped.  The aggregate opposite-subsystem state is computed from the
    mixture density operator and cross-checked against the member sum.
    """
    lay = ens.layout
    if not is_projector(p, tol):
        raise NotAProjectorError("event must be a projector")
    emb = embed_operator(p, subject, lay)
    keep = _keep_positions(lay, {subject})
    if not keep:
        raise LayoutConflictError("subject subsystem is the whole layout")
    probs = [
        float(np.real(np.vdot(s.amplitudes, emb @ s.amplitudes))) for _, s in ens.members
    ]
    total = sum(w * q for (w, _), q in zip(ens.members, probs))
    if total <= tol.weight:
        raise UndefinedConditionalError(
            f"event occurrence probability {total!r} is (numerically) zero"
        )
    reduced_layout = lay.restricted(set(lay.labels) - {subject})
    updated = []
    for k, ((w, s), q) in enumerate(zip(ens.members, probs)):
        if q <= tol.weight:
            continue
        projected = emb @ s.amplitudes
        rho_k = np.outer(projected, projected.conj()) / q
        cond = DensityOperator(
            reduced_layout, partial_trace_matrix(rho_k, lay.dims, keep), tol=tol
        )
        updated.append(UpdatedMember(k, w * q / total, cond))
    aggregate = conditional_state(ens.density(tol), p, subject, form="plain", tol=tol)
    recombined = sum(m.weight * m.state.matrix for m in updated)
    resid = float(np.linalg.norm(recombined - aggregate.matrix))
    if resid > tol.reconstruction * max(1, aggregate.layout.dim):
        raise ArithmeticError(
            f"updated members do not resum to the aggregate state ({resid:.3e})"
        )
    return EnsembleUpdateResult(tuple(updated), aggregate, total)


def monte_carlo_update(
    ens: WeightedEnsemble,
    p: np.ndarray,
    subject: str,
    n_samples: int,
    seed: int,
    tol: Tolerances = DEFAULT,
) -> MonteCarloUpdate:
    """Finite-sample counterpart of ``ensemble_update``.

    Each sample picks a member with the prior weights and then flips an
    occurrence coin with that member's event probability; empirical weights
    are the accepted counts normalized.  Driven by ``numpy``'s PCG64
    generator, so runs are bit-reproducible per seed.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if not is_projector(p, tol):
        raise NotAProjectorError("event must be a projector")
    emb = embed_operator(p, subject, ens.layout)
    probs = np.array(
        [np.real(np.vdot(s.amplitudes, emb @ s.amplitudes)) for _, s in ens.members]
    )
    probs = np.clip(probs, 0.0, 1.0)
    weights = np.array(ens.weights)
    rng = np.random.default_rng(seed)
    members = rng.choice(len(weights), size=n_samples, p=weights / weights.sum())
    coins = rng.random(n_samples)
    accepted = coins < probs[members]
    member_counts = np.bincount(members, minlength=len(weights))
    accepted_counts = np.bincount(members[accepted], minlength=len(weights))
    if accepted_counts.sum() == 0:
        raise ZeroSampleError("no sample triggered the event; cannot form weights")
    return MonteCarloUpdate(
        tuple(int(c) for c in member_counts),
        tuple(int(c) for c in accepted_counts),
        n_samples,
        seed,
    )


def redecompose(
    ens: WeightedEnsemble, mixing: np.ndarray, tol: Tolerances = DEFAULT
) -> WeightedEnsemble:
    """A different pure-state decomposition of the same mixture.

    Given a unitary mixing matrix of size >= member count, the members
    |f_j> proportional to sum_k mixing[j, k] sqrt(w_k) |Psi_k> carry the same
    density operator; only the classical bookkeeping changes.
    """
    mixing = np.asarray(mixing, dtype=complex)
    k = len(ens.members)
    if mixing.shape[0] < k or mixing.shape[0] != mixing.shape[1]:
        raise DimensionMismatchError("mixing matrix too small for the ensemble")
    if np.linalg.norm(mixing.conj().T @ mixing - np.eye(mixing.shape[0])) > 1e-10 * mixing.shape[0]:
        raise ValueError("mixing matrix must be unitary")
    lay = ens.layout
    new_members = []
    for j in range(mixing.shape[0]):
        vec = np.zeros(lay.dim, dtype=complex)
        for i, (w, s) in enumerate(ens.members):
            vec += mixing[j, i] * np.sqrt(w) * s.amplitudes
        weight = float(np.real(np.vdot(vec, vec)))
        if weight > tol.weight:
            new_members.append(
                (weight, StateVector(lay, vec / np.sqrt(weight), tol=tol))
            )
    return WeightedEnsemble(tuple(new_members), tol=tol)


def offdiagonal_block_norm(
    rho: DensityOperator, d: DecompositionOfIdentity
) -> float:
    """Largest Frobenius norm of a cross block P_j rho P_k (j != k).

    Zero (to tolerance) means the state carries no coherence between the
    decomposition's sectors: decoherence relative to these events.
    """
    embs = [embed_operator(p, d.subsystem, rho.layout) for p in d.projectors]
    worst = 0.0
    for j, a in enumerate(embs):
        for k, b in enumerate(embs):
            if j != k:
                worst = max(worst, float(np.linalg.norm(a @ rho.matrix @ b)))
    return worst
