"""Premeasurement unitaries on object x instrument pairs.

A premeasurement couples a measured observable on the object to a pointer
observable on the instrument: whenever the input has a sharp measured value,
the output has the corresponding sharp pointer value (calibration).  The
ideal construction leaves sharp inputs untouched; the exact construction
dresses an ideal one with per-branch unitaries and keeps calibration while
breaking idealness.

Branch correspondence is an explicit ``index_map`` from measured branch
positions to pointer branch positions; nothing is inferred from eigenvalue
equality.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass, replace

import numpy as np

from .branches import Branch, BranchDecomposition
from .errors import DimensionMismatchError, DressingError, LayoutConflictError
from .hilbert import (
    StateVector,
    SubsystemBasis,
    SubsystemLayout,
    DensityOperator,
    complete_orthonormal,
    embed_operator,
    random_unitary,
)
from .observables import SpectralBranch, SpectralObservable, projector_onto
from .tolerances import DEFAULT, Tolerances


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of one verification condition over randomized inputs."""

    condition: str
    max_residual: float
    samples: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tolerance


@dataclass(frozen=True)
class Premeasurement:
    """Unitary on object (x) instrument plus the observables it couples.

    Construction validates structure (labels, dimensions, unitarity, the
    injective index map); the calibration condition itself is the contract
    of the ``build_*`` constructors and is verified by ``check_calibration``,
    so deliberately broken instances can still be represented.
    """

    object_label: str
    instrument_label: str
    measured: SpectralObservable
    pointer: SpectralObservable
    ready_state: StateVector
    unitary: np.ndarray
    index_map: tuple[tuple[int, int], ...]
    tol: InitVar[Tolerances] = DEFAULT

    def __post_init__(self, tol: Tolerances):
        if self.object_label == self.instrument_label:
            raise LayoutConflictError("object and instrument labels must differ")
        if self.measured.subsystem != self.object_label:
            raise LayoutConflictError("measured observable is not on the object")
        if self.pointer.subsystem != self.instrument_label:
            raise LayoutConflictError("pointer observable is not on the instrument")
        if self.ready_state.layout.labels != (self.instrument_label,):
            raise LayoutConflictError("ready state must live on the instrument alone")
        if self.ready_state.layout.dim != self.pointer.dim:
            raise DimensionMismatchError("ready state does not match instrument dim")
        if not self.ready_state.normalized:
            raise ValueError("ready state must be normalized")
        d = self.measured.dim * self.pointer.dim
        u = np.array(self.unitary, dtype=complex)
        if u.shape != (d, d):
            raise DimensionMismatchError(f"unitary shape {u.shape}, expected {(d, d)}")
        resid = np.linalg.norm(u.conj().T @ u - np.eye(d))
        if resid > tol.unitary * max(1, d):
            raise ValueError(f"matrix is not unitary: residual {resid:.3e}")
        u.setflags(write=False)
        object.__setattr__(self, "unitary", u)
        pairs = tuple((int(a), int(b)) for a, b in self.index_map)
        object.__setattr__(self, "index_map", pairs)
        keys = [a for a, _ in pairs]
        vals = [b for _, b in pairs]
        if sorted(keys) != list(range(self.measured.branch_count)):
            raise ValueError("index_map must cover every measured branch exactly once")
        if len(set(vals)) != len(vals):
            raise ValueError("index_map must be injective into pointer branches")
        if any(not 0 <= v < self.pointer.branch_count for v in vals):
            raise ValueError("index_map targets unknown pointer branches")
        if self.pointer.branch_count < self.measured.branch_count:
            raise DimensionMismatchError("fewer pointer branches than measured branches")

    @property
    def mapping(self) -> dict[int, int]:
        return dict(self.index_map)

    @property
    def object_dim(self) -> int:
        return self.measured.dim

    @property
    def instrument_dim(self) -> int:
        return self.pointer.dim

    @property
    def layout(self) -> SubsystemLayout:
        return SubsystemLayout(
            (
                (self.object_label, self.object_dim),
                (self.instrument_label, self.instrument_dim),
            )
        )

    def pointer_projector_for(self, measured_index: int) -> np.ndarray:
        """Pointer projector corresponding to a measured branch."""
        return self.pointer.projector(self.mapping[measured_index])


def build_ideal(
    measured: SpectralObservable,
    pointer_states: SubsystemBasis,
    ready_state: StateVector,
    pointer: SpectralObservable | None = None,
    completion_seed: int = 0,
    tol: Tolerances = DEFAULT,
) -> Premeasurement:
    """Ideal premeasurement from one pointer state per measured branch.

    The unitary maps |phi> (x) |ready> to sum_k (E_k |phi>) (x) |b_k> and is
    completed to a full unitary on the orthogonal complement of the initial
    sector by seeded Gram-Schmidt; physical behaviour does not depend on the
    completion (only on the initial sector), so ``completion_seed`` may be
    anything.

    When ``pointer`` is omitted, a pointer observable is built from the
    states themselves (eigenvalue k for branch k, plus one idle branch with
    eigenvalue -1 if the instrument has leftover dimensions).  When given,
    each pointer state must lie in the range of exactly one of its
    projectors, which fixes the index map.
    """
    n_branches = measured.branch_count
    d_a = measured.dim
    d_b = pointer_states.dim
    if len(pointer_states.vectors) != n_branches:
        raise DimensionMismatchError(
            f"{len(pointer_states.vectors)} pointer states for {n_branches} branches"
        )
    if d_b < n_branches:
        raise DimensionMismatchError(
            f"instrument dimension {d_b} < branch count {n_branches}"
        )
    instrument = pointer_states.subsystem
    if ready_state.layout.labels != (instrument,) or ready_state.layout.dim != d_b:
        raise LayoutConflictError("ready state must live on the instrument subsystem")

    if pointer is None:
        pointer, index_map = _pointer_from_states(instrument, pointer_states, tol)
    else:
        if pointer.subsystem != instrument or pointer.dim != d_b:
            raise LayoutConflictError("pointer observable does not match instrument")
        index_map = _match_pointer_states(pointer, pointer_states)

    domain = [np.kron(e, ready_state.amplitudes) for e in np.eye(d_a, dtype=complex)]
    images = []
    for e in np.eye(d_a, dtype=complex):
        img = np.zeros(d_a * d_b, dtype=complex)
        for k, branch in enumerate(measured.branches):
            img += np.kron(branch.projector @ e, pointer_states.vectors[k])
        images.append(img)
    rng = np.random.default_rng(completion_seed)
    dim = d_a * d_b
    extra = [
        rng.standard_normal(dim) + 1j * rng.standard_normal(dim) for _ in range(2 * dim)
    ]
    domain_full = complete_orthonormal(domain, dim, candidates=extra[:dim])
    image_full = complete_orthonormal(images, dim, candidates=extra[dim:])
    unitary = np.column_stack(image_full) @ np.column_stack(domain_full).conj().T

    return Premeasurement(
        object_label=measured.subsystem,
        instrument_label=instrument,
        measured=measured,
        pointer=pointer,
        ready_state=ready_state,
        unitary=unitary,
        index_map=tuple(index_map.items()),
        tol=tol,
    )


def _pointer_from_states(
    instrument: str, pointer_states: SubsystemBasis, tol: Tolerances
) -> tuple[SpectralObservable, dict[int, int]]:
    d_b = pointer_states.dim
    branches = [
        (float(k), projector_onto([v])) for k, v in enumerate(pointer_states.vectors)
    ]
    remainder = np.eye(d_b, dtype=complex) - sum(p for _, p in branches)
    if np.real(np.trace(remainder)) > 0.5:
        branches.append((-1.0, remainder))
    branches.sort(key=lambda t: t[0])
    observable = SpectralObservable(
        instrument,
        tuple(SpectralBranch(i, val, proj) for i, (val, proj) in enumerate(branches)),
        tol=tol,
    )
    value_to_pos = {val: i for i, (val, _) in enumerate(branches)}
    index_map = {k: value_to_pos[float(k)] for k in range(len(pointer_states.vectors))}
    return observable, index_map


def _match_pointer_states(
    pointer: SpectralObservable, pointer_states: SubsystemBasis
) -> dict[int, int]:
    index_map: dict[int, int] = {}
    for k, v in enumerate(pointer_states.vectors):
        hits = [
            j
            for j, b in enumerate(pointer.branches)
            if np.linalg.norm(b.projector @ v - v) <= 1e-8
        ]
        if len(hits) != 1:
            raise DimensionMismatchError(
                f"pointer state {k} does not lie in the range of exactly one "
                f"pointer projector (matches {hits})"
            )
        index_map[k] = hits[0]
    if len(set(index_map.values())) != len(index_map):
        raise DimensionMismatchError("pointer states share a pointer projector")
    return index_map


def build_exact(
    ideal: Premeasurement,
    dressings: list[tuple[np.ndarray, np.ndarray]],
    tol: Tolerances = DEFAULT,
) -> Premeasurement:
    """Dress an ideal premeasurement into a general exact one.

    ``dressings`` holds one (object unitary V_k, instrument unitary W_k) pair
    per measured branch; W_k must map the range of the k-th pointer projector
    into itself.  The dressed unitary keeps the calibration, probability
    reproduction, and dynamical conditions but is no longer ideal in general.
    """
    n = ideal.measured.branch_count
    if len(dressings) != n:
        raise DimensionMismatchError(f"{len(dressings)} dressings for {n} branches")
    d_a, d_b = ideal.object_dim, ideal.instrument_dim
    eye_b = np.eye(d_b, dtype=complex)
    dresser = np.zeros((d_a * d_b, d_a * d_b), dtype=complex)
    mapped = set()
    for k, (v_a, w_b) in enumerate(dressings):
        v_a = np.asarray(v_a, dtype=complex)
        w_b = np.asarray(w_b, dtype=complex)
        if v_a.shape != (d_a, d_a) or w_b.shape != (d_b, d_b):
            raise DimensionMismatchError("dressing shapes do not match the layout")
        if np.linalg.norm(v_a.conj().T @ v_a - np.eye(d_a)) > tol.unitary * d_a:
            raise DressingError(f"object dressing {k} is not unitary")
        f = ideal.pointer_projector_for(k)
        leak = np.linalg.norm((eye_b - f) @ w_b @ f)
        if leak > tol.orth * d_b:
            raise DressingError(
                f"instrument dressing {k} leaks outside its pointer range "
                f"(residual {leak:.3e})"
            )
        if np.linalg.norm(f @ w_b.conj().T @ w_b @ f - f) > tol.orth * d_b:
            raise DressingError(f"instrument dressing {k} is not isometric on its range")
        dresser += np.kron(v_a, w_b @ f)
        mapped.add(ideal.mapping[k])
    for j, branch in enumerate(ideal.pointer.branches):
        if j not in mapped:
            dresser += np.kron(np.eye(d_a, dtype=complex), branch.projector)
    return replace(ideal, unitary=dresser @ ideal.unitary)


def evolve(pm: Premeasurement, object_state: StateVector, tol: Tolerances = DEFAULT) -> StateVector:
    """Final composite state U(|phi> (x) |ready>)."""
    if object_state.layout.labels != (pm.object_label,):
        raise LayoutConflictError(
            f"object state must live on {pm.object_label!r} alone, "
            f"got {object_state.layout}"
        )
    if object_state.layout.dim != pm.object_dim:
        raise DimensionMismatchError("object state dimension mismatch")
    if not object_state.normalized:
        raise ValueError("object state must be normalized")
    amps = pm.unitary @ np.kron(object_state.amplitudes, pm.ready_state.amplitudes)
    return StateVector(pm.layout, amps, normalized=True, tol=tol)


def _random_sharp_state(
    branch: SpectralBranch, label: str, dim: int, rng: np.random.Generator
) -> StateVector:
    lay = SubsystemLayout(((label, dim),))
    for _ in range(64):
        raw = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        vec = branch.projector @ raw
        n = np.linalg.norm(vec)
        if n > 1e-8:
            return StateVector(lay, vec / n)
    raise RuntimeError("could not sample a state in the projector range")


def check_calibration(
    pm: Premeasurement, trials: int, seed: int = 0, tol: Tolerances = DEFAULT
) -> ConditionReport:
    """Sharp measured value in => sharp pointer value out.

    Samples random states in each measured eigenspace and reports the largest
    ||F_k |Phi> - |Phi>|| over all branches.
    """
    rng = np.random.default_rng(seed)
    worst, samples = 0.0, 0
    for k, branch in enumerate(pm.measured.branches):
        f_k = embed_operator(pm.pointer_projector_for(k), pm.instrument_label, pm.layout)
        for _ in range(trials):
            phi = _random_sharp_state(branch, pm.object_label, pm.object_dim, rng)
            final = evolve(pm, phi).amplitudes
            worst = max(worst, float(np.linalg.norm(f_k @ final - final)))
            samples += 1
    return ConditionReport("calibration", worst, samples, tol.condition)


def check_probability_reproduction(
    pm: Premeasurement, trials: int, seed: int = 0, tol: Tolerances = DEFAULT
) -> ConditionReport:
    """Born statistics of the measured observable equal pointer statistics."""
    rng = np.random.default_rng(seed)
    lay = SubsystemLayout(((pm.object_label, pm.object_dim),))
    embedded = [
        embed_operator(pm.pointer_projector_for(k), pm.instrument_label, pm.layout)
        for k in range(pm.measured.branch_count)
    ]
    worst, samples = 0.0, 0
    for _ in range(trials):
        raw = rng.standard_normal(pm.object_dim) + 1j * rng.standard_normal(pm.object_dim)
        phi = StateVector(lay, raw / np.linalg.norm(raw))
        final = evolve(pm, phi).amplitudes
        for k, branch in enumerate(pm.measured.branches):
            lhs = np.real(np.vdot(phi.amplitudes, branch.projector @ phi.amplitudes))
            rhs = np.real(np.vdot(final, embedded[k] @ final))
            worst = max(worst, abs(float(lhs - rhs)))
            samples += 1
    return ConditionReport("probability_reproduction", worst, samples, tol.condition)


def check_dynamical(
    pm: Premeasurement, trials: int, seed: int = 0, tol: Tolerances = DEFAULT
) -> ConditionReport:
    """Only the k-th initial component feeds the k-th final component:
    F_k U(|phi> (x) |ready>) = U(E_k |phi> (x) |ready>)."""
    rng = np.random.default_rng(seed)
    ready = pm.ready_state.amplitudes
    embedded = [
        embed_operator(pm.pointer_projector_for(k), pm.instrument_label, pm.layout)
        for k in range(pm.measured.branch_count)
    ]
    worst, samples = 0.0, 0
    for _ in range(trials):
        raw = rng.standard_normal(pm.object_dim) + 1j * rng.standard_normal(pm.object_dim)
        phi = raw / np.linalg.norm(raw)
        final = pm.unitary @ np.kron(phi, ready)
        for k, branch in enumerate(pm.measured.branches):
            lhs = embedded[k] @ final
            rhs = pm.unitary @ np.kron(branch.projector @ phi, ready)
            worst = max(worst, float(np.linalg.norm(lhs - rhs)))
            samples += 1
    return ConditionReport("dynamical", worst, samples, tol.condition)


def luders_state(
    object_state: StateVector, measured: SpectralObservable, tol: Tolerances = DEFAULT
) -> DensityOperator:
    """Non-selective post-measurement object state sum_k E_k |phi><phi| E_k."""
    if object_state.layout.dim != measured.dim:
        raise DimensionMismatchError("state does not match the observable dimension")
    if not object_state.normalized:
        raise ValueError("object state must be normalized")
    rho = np.outer(object_state.amplitudes, object_state.amplitudes.conj())
    out = np.zeros_like(rho)
    for b in measured.branches:
        out += b.projector @ rho @ b.projector
    return DensityOperator(object_state.layout, out, tol=tol)


def branch_decomposition(
    final: StateVector, pointer: SpectralObservable, tol: Tolerances = DEFAULT
) -> BranchDecomposition:
    """Complete-measurement branches (k, ||F_k Phi||^2, F_k Phi normalized).

    Branches with weight below the drop threshold are recorded only through
    ``dropped_weight``.
    """
    if not final.normalized:
        raise ValueError("final state must be normalized")
    lay = final.layout
    kept: list[Branch] = []
    dropped = 0.0
    for j, b in enumerate(pointer.branches):
        f = embed_operator(b.projector, pointer.subsystem, lay)
        vec = f @ final.amplitudes
        w = float(np.real(np.vdot(vec, vec)))
        if w > tol.weight:
            component = StateVector(lay, vec / np.sqrt(w), normalized=True, tol=tol)
            kept.append(Branch(j, w, component))
        else:
            dropped += w
    return BranchDecomposition(pointer.subsystem, tuple(kept), dropped, tol=tol)


def random_observable(
    dim: int, n_branches: int, subsystem: str, rng: np.random.Generator
) -> SpectralObservable:
    """Random observable with the requested branch count.

    Eigenvalues are 0..n-1; multiplicities are a random composition of the
    dimension, so degenerate eigenspaces are exercised whenever dim > n.
    """
    if not 1 <= n_branches <= dim:
        raise DimensionMismatchError(f"cannot fit {n_branches} branches in dim {dim}")
    cuts = np.sort(rng.choice(dim - 1, size=n_branches - 1, replace=False) + 1)
    bounds = [0, *cuts.tolist(), dim]
    u = random_unitary(dim, rng)
    branches = []
    for k in range(n_branches):
        cols = u[:, bounds[k] : bounds[k + 1]]
        branches.append(SpectralBranch(k, float(k), cols @ cols.conj().T))
    return SpectralObservable(subsystem, tuple(branches))


def random_range_unitary(projector: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Haar unitary on the range of a projector, identity on its complement."""
    eigvals, eigvecs = np.linalg.eigh(projector)
    cols = eigvecs[:, eigvals > 0.5]
    r = cols.shape[1]
    u = random_unitary(r, rng)
    full = np.eye(projector.shape[0], dtype=complex) - cols @ cols.conj().T
    return full + cols @ u @ cols.conj().T


def random_ideal(
    object_label: str,
    instrument_label: str,
    object_dim: int,
    instrument_dim: int,
    rng: np.random.Generator,
    n_branches: int | None = None,
    tol: Tolerances = DEFAULT,
) -> Premeasurement:
    """Random ideal premeasurement at the given dimensions."""
    n = n_branches if n_branches is not None else min(object_dim, instrument_dim)
    measured = random_observable(object_dim, n, object_label, rng)
    q = random_unitary(instrument_dim, rng)
    pointer_states = SubsystemBasis(
        instrument_label, tuple(q[:, k] for k in range(n)), tol=tol
    )
    raw = rng.standard_normal(instrument_dim) + 1j * rng.standard_normal(instrument_dim)
    ready = StateVector(
        SubsystemLayout(((instrument_label, instrument_dim),)), raw / np.linalg.norm(raw)
    )
    seed = int(rng.integers(2**32))
    return build_ideal(measured, pointer_states, ready, completion_seed=seed, tol=tol)


def random_exact(
    object_label: str,
    instrument_label: str,
    object_dim: int,
    instrument_dim: int,
    rng: np.random.Generator,
    n_branches: int | None = None,
    tol: Tolerances = DEFAULT,
) -> Premeasurement:
    """Random exact (dressed) premeasurement at the given dimensions."""
    ideal = random_ideal(
        object_label, instrument_label, object_dim, instrument_dim, rng, n_branches, tol
    )
    dressings = [
        (
            random_unitary(ideal.object_dim, rng),
            random_range_unitary(ideal.pointer_projector_for(k), rng),
        )
        for k in range(ideal.measured.branch_count)
    ]
    return build_exact(ideal, dressings, tol=tol)
