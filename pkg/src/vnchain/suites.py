"""Randomized property suites behind the ``verify`` command.

Each suite draws its own inputs from a seed derived from the run seed, so a
verify run is reproducible, and reports the worst residual it saw against a
fixed tolerance.  The ``corrupt`` hook deliberately damages the system under
test (not the checks) so that fault injection can prove the suites have
teeth.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .chains import (
    WeightedEnsemble,
    conditional_state,
    ensemble_update,
    improper_mixture,
    monte_carlo_update,
    offdiagonal_block_norm,
    proper_mixture,
    redecompose,
    relative_state,
    run_two_link_chain,
    tripartite_conditional_consistency,
)
from .hilbert import (
    StateVector,
    SubsystemBasis,
    complete_orthonormal,
    embed_operator,
    expand_in_basis,
    layout,
    partial_scalar_product,
    partial_trace,
    partial_trace_matrix,
    purity,
    random_density,
    random_state,
    random_unitary,
    tensor,
)
from .observables import observable_from_matrix, projector_onto
from .premeasurement import (
    Premeasurement,
    branch_decomposition,
    build_exact,
    build_ideal,
    check_calibration,
    check_dynamical,
    check_probability_reproduction,
    evolve,
    luders_state,
    random_exact,
    random_ideal,
)
from .tolerances import DEFAULT


@dataclass(frozen=True)
class SuiteResult:
    name: str
    cases: int
    max_residual: float
    tolerance: float
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tolerance


@dataclass(frozen=True)
class SuiteContext:
    object_dims: tuple[int, ...]
    instrument_dims: tuple[int, ...]
    trials: int
    seed: int
    corrupt: str | None = None

    def rng(self, suite_index: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, suite_index])

    @property
    def dim_pairs(self) -> list[tuple[int, int]]:
        return [(a, b) for a in self.object_dims for b in self.instrument_dims]


CORRUPT_MODES = ("phase",)


def corrupt_premeasurement(pm: Premeasurement, mode: str) -> Premeasurement:
    """Damage a premeasurement for fault injection.

    ``phase``: swap the first and last unitary columns and flip a sign,
    moving amplitude across the initial/completion sectors.  The result is
    still unitary but no longer calibrated.
    """
    if mode == "phase":
        u = np.array(pm.unitary)
        u[:, [0, -1]] = u[:, [-1, 0]]
        u[:, 0] *= -1.0
        return replace(pm, unitary=u)
    raise ValueError(f"unknown corruption mode {mode!r}")


def _maybe_corrupt(pm: Premeasurement, ctx: SuiteContext) -> Premeasurement:
    return corrupt_premeasurement(pm, ctx.corrupt) if ctx.corrupt else pm


def _random_projector(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    r = rank if rank is not None else int(rng.integers(1, dim))
    q = random_unitary(dim, rng)
    return projector_onto([q[:, i] for i in range(r)])


def _suite_pt_commutativity(ctx: SuiteContext) -> SuiteResult:
    rng = ctx.rng(1)
    worst, cases = 0.0, 0
    for _ in range(ctx.trials):
        da, db = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        x = rng.standard_normal((da * db,) * 2) + 1j * rng.standard_normal((da * db,) * 2)
        y = rng.standard_normal((db, db)) + 1j * rng.standard_normal((db, db))
        y_emb = np.kron(np.eye(da), y)
        lhs = partial_trace_matrix(y_emb @ x, (da, db), [0])
        rhs = partial_trace_matrix(x @ y_emb, (da, db), [0])
        worst = max(worst, float(np.linalg.norm(lhs - rhs)))
        cases += 1
    return SuiteResult("hilbert.partial_trace_commutativity", cases, worst, 1e-10)


def _suite_pt_trace_one(ctx: SuiteContext) -> SuiteResult:
    rng = ctx.rng(2)
    worst, cases = 0.0, 0
    for _ in range(ctx.trials):
        da, db = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        lay = layout(("A", da), ("B", db))
        state = random_state(lay, rng)
        red = partial_trace(state, {"B"})
        worst = max(worst, abs(float(np.real(np.trace(red.matrix))) - 1.0))
        cases += 1
    return SuiteResult("hilbert.partial_trace_trace_one", cases, worst, 1e-12)


def _suite_pt_psd(ctx: SuiteContext) -> SuiteResult:
    rng = ctx.rng(3)
    worst, cases = 0.0, 0
    for _ in range(ctx.trials):
        da, db = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        lay = layout(("A", da), ("B", db))
        red = partial_trace(random_state(lay, rng), {"A"})
        lo = float(np.linalg.eigvalsh(red.matrix)[0])
        worst = max(worst, max(0.0, -lo))
        cases += 1
    return SuiteResult("hilbert.partial_trace_psd", cases, worst, DEFAULT.psd)


def _suite_expansion(ctx: SuiteContext) -> SuiteResult:
    rng = ctx.rng(4)
    worst, cases = 0.0, 0
    for _ in range(ctx.trials):
        da, db = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        lay = layout(("A", da), ("B", db))
        state = random_state(lay, rng)
        q = random_unitary(db, rng)
        basis = SubsystemBasis("B", tuple(q[:, i] for i in range(db)))
        coeffs = expand_in_basis(state, basis)
        norms = sum(c.norm() ** 2 for _, c in coeffs)
        worst = max(worst, abs(norms - 1.0))
        resum = np.zeros(lay.dim, dtype=complex)
        for n, c in coeffs:
            resum += np.kron(c.amplitudes, basis.vectors[n])
        worst = max(worst, float(np.linalg.norm(resum - state.amplitudes)))
        cases += 1
    return SuiteResult("hilbert.expansion_resummation", cases, worst, 1e-10)


def _suite_psp_expansion(ctx: SuiteContext) -> SuiteResult:
    rng = ctx.rng(5)
    worst, cases = 0.0, 0
    for _ in range(ctx.trials):
        da, db = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        lay = layout(("A", da), ("B", db))
        state = random_state(lay, rng)
        q = random_unitary(db, rng)
        basis = SubsystemBasis("B", tuple(q[:, i] for i in range(db)))
        coeffs = expand_in_basis(state, basis)
        n = int(rng.integers(0, db))
        psp = partial_scalar_product(basis.vectors[n], "B", state)
        worst = max(
            worst, float(np.max(np.abs(psp.amplitudes - coeffs[n][1].amplitudes)))
        )
        cases += 1
    return SuiteResult("hilbert.psp_matches_expansion", cases, worst, 1e-12)


def _suite_observables(ctx: SuiteContext) -> SuiteResult:
    rng = ctx.rng(6)
    worst, cases = 0.0, 0
    for _ in range(ctx.trials):
        d = int(rng.integers(2, 5))
        h = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        h = (h + h.conj().T) / 2
        obs = observable_from_matrix(h, "A")
        worst = max(worst, float(np.linalg.norm(obs.matrix() - h)))
        rebuilt = observable_from_matrix(obs.matrix(), "A")
        worst = max(
            worst,
            max(
                abs(a.eigenvalue - b.eigenvalue)
                + float(np.linalg.norm(a.projector - b.projector))
                for a, b in zip(obs.branches, rebuilt.branches)
            )
            if obs.branch_count == rebuilt.branch_count
            else 1.0,
        )
        cases += 1
    return SuiteResult("observables.spectral_reconstruction", cases, worst, 1e-9)


def _grid_premeasurements(ctx: SuiteContext, rng, exact=True):
    reps = max(1, ctx.trials // max(1, len(ctx.dim_pairs)))
    for da, db in ctx.dim_pairs:
        for _ in range(reps):
            if exact:
                pm = random_exact("A", "B", da, db, rng)
            else:
                pm = random_ideal("A", "B", da, db, rng)
            yield _maybe_corrupt(pm, ctx)


def _suite_triangle(ctx: SuiteContext) -> SuiteResult:
    rng = ctx.rng(7)
    worst, cases = 0.0, 0
    for pm in _grid_premeasurements(ctx, rng, exact=True):
        seed = int(rng.integers(2**32))
        for fn in (check_calibration, check_probability_reproduction, check_dynamical):
            rep = fn(pm, trials=3, seed=seed)
            worst = max(worst, rep.max_residual)
        cases += 1
    return SuiteResult(
        "premeasurement.equivalence_triangle",
        cases,
        worst,
        1e-9,
        note="calibration, probability reproduction, dynamical on dressed unitaries",
    )


def _suite_ideal_definitions(ctx: SuiteContext) -> SuiteResult:
    rng = ctx.rng(8)
    worst, cases = 0.0, 0
    for pm in _grid_premeasurements(ctx, rng, exact=False):
        lay_a = layout((pm.object_label, pm.object_dim))
        phi = random_state(lay_a, rng)
        final = evolve(pm, phi)
        # expansion form: sum_k (E_k phi) (x) |b_k>
        expected = np.zeros(final.layout.dim, dtype=complex)
        for k, br in enumerate(pm.measured.branches):
            pointer_vec = _recovered_pointer_state(pm, k, rng)
            expected += np.kron(br.projector @ phi.amplitudes, pointer_vec)
        worst = max(worst, float(np.linalg.norm(final.amplitudes - expected)))
        # Lueders form equals the reduced evolved state
        lud = luders_state(phi, pm.measured)
        red = partial_trace(final, {pm.instrument_label})
        worst = max(worst, float(np.linalg.norm(lud.matrix - red.matrix)))
        # sharp states unchanged
        k = int(rng.integers(0, pm.measured.branch_count))
        br = pm.measured.branches[k]
        raw = br.projector @ random_state(lay_a, rng).amplitudes
        if np.linalg.norm(raw) > 1e-6:
            sharp = StateVector(lay_a, raw / np.linalg.norm(raw))
            red_sharp = partial_trace(evolve(pm, sharp), {pm.instrument_label})
            proj = np.outer(sharp.amplitudes, sharp.amplitudes.conj())
            worst = max(worst, float(np.linalg.norm(red_sharp.matrix - proj)))
        cases += 1
    return SuiteResult("premeasurement.ideal_definitions", cases, worst, 1e-10)


def _recovered_pointer_state(
    pm: Premeasurement, k: int, rng: np.random.Generator
) -> np.ndarray:
    """Pointer state of branch k, phase and all, read off the unitary itself.

    For an ideal premeasurement a sharp input |phi_k> evolves to
    |phi_k> (x) |b_k> exactly, so contracting <phi_k| against the output
    recovers |b_k| with the phase actually used by the construction.
    """
    branch = pm.measured.branches[k]
    for _ in range(64):
        raw = rng.standard_normal(pm.object_dim) + 1j * rng.standard_normal(pm.object_dim)
        vec = branch.projector @ raw
        n = np.linalg.norm(vec)
        if n > 1e-8:
            phi = vec / n
            break
    else:
        raise RuntimeError("empty measured eigenspace")
    final = pm.unitary @ np.kron(phi, pm.ready_state.amplitudes)
    return np.tensordot(
        phi.conj(), final.reshape(pm.object_dim, pm.instrument_dim), axes=(0, 0)
    )


def _suite_completeness(ctx: SuiteContext) -> SuiteResult:
    rng = ctx.rng(9)
    worst, cases = 0.0, 0
    for pm in _grid_premeasurements(ctx, rng, exact=True):
        phi = random_state(layout((pm.object_label, pm.object_dim)), rng)
        final = evolve(pm, phi)
        resum = np.zeros_like(final.amplitudes)
        for br in pm.pointer.branches:
            f = embed_operator(br.projector, pm.instrument_label, pm.layout)
            resum = resum + f @ final.amplitudes
        worst = max(worst, float(np.linalg.norm(resum - final.amplitudes)))
        cases += 1
    return SuiteResult("premeasurement.pointer_completeness", cases, worst, 1e-12)


def _suite_identity_dressing(ctx: SuiteContext) -> SuiteResult:
    rng = ctx.rng(10)
    worst, cases = 0.0, 0
    for pm in _grid_premeasurements(ctx, rng, exact=False):
        eye_a = np.eye(pm.object_dim, dtype=complex)
        eye_b = np.eye(pm.instrument_dim, dtype=complex)
        dressed = build_exact(pm, [(eye_a, eye_b)] * pm.measured.branch_count)
        worst = max(worst, float(np.max(np.abs(dressed.unitary - pm.unitary))))
        cases += 1
    return SuiteResult("premeasurement.identity_dressing", cases, worst, 1e-12)


def _random_chain(ctx: SuiteContext, rng):
    da = int(rng.choice(ctx.object_dims))
    db = int(rng.choice(ctx.instrument_dims))
    pm1 = random_ideal("A", "B", da, db, rng)
    n2 = pm1.pointer.branch_count
    dc = max(n2, int(rng.choice(ctx.instrument_dims)))
    q = random_unitary(dc, rng)
    pstates = SubsystemBasis("C", tuple(q[:, i] for i in range(n2)))
    raw = rng.standard_normal(dc) + 1j * rng.standard_normal(dc)
    ready = StateVector(layout(("C", dc)), raw / np.linalg.norm(raw))
    pm2 = build_ideal(
        pm1.pointer, pstates, ready, completion_seed=int(rng.integers(2**32))
    )
    phi = random_state(layout(("A", da)), rng)
    return pm1, pm2, phi


def _suite_two_link(ctx: SuiteContext) -> SuiteResult:
    rng = ctx.rng(11)
    worst, cases = 0.0, 0
    trials = max(1, ctx.trials // 10)
    for _ in range(trials):
        pm1, pm2, phi = _random_chain(ctx, rng)
        intermediate, final = run_two_link_chain(pm1, pm2, phi)
        resum = np.zeros_like(final.amplitudes)
        for j, br in enumerate(pm2.measured.branches):
            f = embed_operator(br.projector, "B", intermediate.layout)
            pointer_vec = _recovered_pointer_state(pm2, j, rng)
            resum += np.kron(f @ intermediate.amplitudes, pointer_vec)
        worst = max(worst, float(np.linalg.norm(resum - final.amplitudes)))
        cases += 1
    return SuiteResult("chains.two_link_resummation", cases, worst, 1e-10)


def _suite_decoherence(ctx: SuiteContext) -> SuiteResult:
    rng = ctx.rng(12)
    worst, cases = 0.0, 0
    trials = max(1, ctx.trials // 10)
    for _ in range(trials):
        pm1, pm2, phi = _random_chain(ctx, rng)
        _, final = run_two_link_chain(pm1, pm2, phi)
        rho_ab = partial_trace(final, {"C"})
        worst = max(worst, offdiagonal_block_norm(rho_ab, pm1.pointer.decomposition()))
        worst = max(worst, abs(purity(final.density()) - 1.0))
        cases += 1
    return SuiteResult(
        "chains.decoherence_split",
        cases,
        worst,
        1e-10,
        note="pointer cross blocks vanish while the full chain state stays pure",
    )


def _suite_relative_forms(ctx: SuiteContext) -> SuiteResult:
    rng = ctx.rng(13)
    worst, cases = 0.0, 0
    for _ in range(max(ctx.trials, 1)):
        da, db = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        lay = layout(("A", da), ("B", db))
        psi = random_state(lay, rng)
        raw = rng.standard_normal(db) + 1j * rng.standard_normal(db)
        phi_b = raw / np.linalg.norm(raw)
        overlap = np.linalg.norm(
            partial_scalar_product(phi_b, "B", psi).amplitudes
        )
        if overlap < 1e-3:
            continue
        # first form: coefficient in a basis containing phi_b
        basis_vectors = complete_orthonormal([phi_b], db)
        basis = SubsystemBasis("B", tuple(basis_vectors))
        coeff = expand_in_basis(psi, basis)[0][1].normalize()
        # second form: normalized partial scalar product
        rel = relative_state(psi, "B", phi_b)
        # third form: conditional state through the partial trace
        cond = conditional_state(psi.density(), projector_onto([phi_b]), "B")
        p1 = np.outer(coeff.amplitudes, coeff.amplitudes.conj())
        p2 = np.outer(rel.amplitudes, rel.amplitudes.conj())
        worst = max(worst, float(np.linalg.norm(p1 - p2)))
        worst = max(worst, float(np.linalg.norm(p2 - cond.matrix)))
        cases += 1
    return SuiteResult("chains.relative_state_forms", cases, worst, 1e-10)


def _suite_conditional_equiv(ctx: SuiteContext) -> SuiteResult:
    rng = ctx.rng(14)
    worst, cases = 0.0, 0
    for _ in range(max(ctx.trials, 1)):
        da, db = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        lay = layout(("A", da), ("B", db))
        rho = random_density(lay, rng)
        p = _random_projector(db, rng)
        try:
            plain = conditional_state(rho, p, "B", form="plain")
            sandwich = conditional_state(rho, p, "B", form="sandwich")
        except ValueError:
            continue
        worst = max(worst, float(np.linalg.norm(plain.matrix - sandwich.matrix)))
        # ensemble route: aggregate equals both closed forms
        weights = rng.random(3) + 0.1
        weights /= weights.sum()
        ens = WeightedEnsemble(
            tuple((float(w), random_state(lay, rng)) for w in weights)
        )
        try:
            res = ensemble_update(ens, p, "B")
        except ValueError:
            continue
        mixed = ens.density()
        agg_plain = conditional_state(mixed, p, "B", form="plain")
        agg_sandwich = conditional_state(mixed, p, "B", form="sandwich")
        worst = max(worst, float(np.linalg.norm(res.aggregate.matrix - agg_plain.matrix)))
        worst = max(worst, float(np.linalg.norm(agg_plain.matrix - agg_sandwich.matrix)))
        cases += 1
    return SuiteResult("chains.conditional_equivalences", cases, worst, 1e-10)


def _suite_tripartite(ctx: SuiteContext) -> SuiteResult:
    rng = ctx.rng(15)
    worst, cases = 0.0, 0
    for _ in range(max(ctx.trials, 1)):
        lay = layout(("A", 2), ("B", 2), ("C", 2))
        rho = random_density(lay, rng)
        p = _random_projector(2, rng, rank=1)
        try:
            via_full, via_reduced = tripartite_conditional_consistency(rho, p, "B", "C")
        except ValueError:
            continue
        worst = max(worst, float(np.linalg.norm(via_full.matrix - via_reduced.matrix)))
        cases += 1
    return SuiteResult("chains.tripartite_consistency", cases, worst, 1e-10)


def _suite_born_weights(ctx: SuiteContext) -> SuiteResult:
    rng = ctx.rng(16)
    worst, cases = 0.0, 0
    trials = max(1, ctx.trials // 5)
    for _ in range(trials):
        da = int(rng.choice(ctx.object_dims))
        db = int(rng.choice(ctx.instrument_dims))
        pm = random_ideal("A", "B", da, db, rng)
        phi = random_state(layout(("A", da)), rng)
        final = evolve(pm, phi)
        bd = branch_decomposition(final, pm.pointer)
        mix = improper_mixture(final, pm.pointer.decomposition())
        for k, br in enumerate(pm.measured.branches):
            born = float(
                np.real(np.vdot(phi.amplitudes, br.projector @ phi.amplitudes))
            )
            j = pm.mapping[k]
            w_bd = next((b.weight for b in bd.branches if b.index == j), 0.0)
            w_mix = next((b.weight for b in mix.branches if b.index == j), 0.0)
            worst = max(worst, abs(w_bd - born), abs(w_mix - born))
        cases += 1
    return SuiteResult("chains.born_weights", cases, worst, 1e-12)


def _suite_absoluteness(ctx: SuiteContext) -> SuiteResult:
    rng = ctx.rng(17)
    worst, cases = 0.0, 0
    trials = max(1, ctx.trials // 5)
    for _ in range(trials):
        da = int(rng.choice(ctx.object_dims))
        db = int(rng.choice(ctx.instrument_dims))
        pm = random_ideal("A", "B", da, db, rng)
        phi = random_state(layout(("A", da)), rng)
        final = evolve(pm, phi)
        ens = proper_mixture(branch_decomposition(final, pm.pointer))
        rho_ab = ens.density()
        rho_c = random_density(layout(("C", int(rng.integers(2, 4)))), rng)
        joined = tensor(rho_ab, rho_c)
        back = partial_trace(joined, {"C"})
        worst = max(worst, float(np.linalg.norm(back.matrix - rho_ab.matrix)))
        cases += 1
    return SuiteResult(
        "chains.absoluteness",
        cases,
        worst,
        1e-12,
        note="adjoining an uncorrelated system leaves a proper mixture alone",
    )


def _suite_redecomposition(ctx: SuiteContext) -> SuiteResult:
    rng = ctx.rng(18)
    worst, cases = 0.0, 0
    trials = max(1, ctx.trials // 5)
    for _ in range(trials):
        lay = layout(("A", 2), ("B", 2))
        weights = rng.random(3) + 0.1
        weights /= weights.sum()
        ens = WeightedEnsemble(
            tuple((float(w), random_state(lay, rng)) for w in weights)
        )
        other = redecompose(ens, random_unitary(3, rng))
        p = _random_projector(2, rng)
        try:
            res_a = ensemble_update(ens, p, "B")
            res_b = ensemble_update(other, p, "B")
        except ValueError:
            continue
        worst = max(
            worst, float(np.linalg.norm(res_a.aggregate.matrix - res_b.aggregate.matrix))
        )
        cases += 1
    return SuiteResult("chains.redecomposition_invariance", cases, worst, 1e-10)


def _suite_monte_carlo(ctx: SuiteContext) -> SuiteResult:
    rng = ctx.rng(19)
    lay = layout(("A", 2), ("B", 2))
    reps, failures = 10, 0
    for rep in range(reps):
        ens = WeightedEnsemble(
            ((0.4, random_state(lay, rng)), (0.6, random_state(lay, rng)))
        )
        p = _random_projector(2, rng, rank=1)
        try:
            exact = ensemble_update(ens, p, "B")
        except ValueError:
            continue
        mc = monte_carlo_update(ens, p, "B", 20_000, seed=int(rng.integers(2**32)))
        total = sum(mc.accepted_counts)
        ok = True
        for m in exact.members:
            w_hat = mc.accepted_counts[m.index] / total
            se = math.sqrt(max(m.weight * (1 - m.weight), 1e-300) / total)
            if abs(w_hat - m.weight) > 3 * se:
                ok = False
        failures += 0 if ok else 1
    return SuiteResult(
        "chains.monte_carlo_binomial",
        reps,
        failures / reps,
        0.2,
        note="fraction of repetitions outside 3 binomial standard errors",
    )


SUITES = (
    _suite_pt_commutativity,
    _suite_pt_trace_one,
    _suite_pt_psd,
    _suite_expansion,
    _suite_psp_expansion,
    _suite_observables,
    _suite_triangle,
    _suite_ideal_definitions,
    _suite_completeness,
    _suite_identity_dressing,
    _suite_two_link,
    _suite_decoherence,
    _suite_relative_forms,
    _suite_conditional_equiv,
    _suite_tripartite,
    _suite_born_weights,
    _suite_absoluteness,
    _suite_redecomposition,
    _suite_monte_carlo,
)


def run_suites(
    max_object_dim: int = 4,
    max_instrument_dim: int = 6,
    trials: int = 100,
    seed: int = 0,
    corrupt: str | None = None,
    jobs: int = 1,
) -> tuple[SuiteResult, ...]:
    """Run every property suite over the dimension grid; order is fixed."""
    if corrupt is not None and corrupt not in CORRUPT_MODES:
        raise ValueError(f"unknown corruption mode {corrupt!r}")
    if trials == 0:
        return ()
    ctx = SuiteContext(
        object_dims=tuple(range(2, max_object_dim + 1)),
        instrument_dims=tuple(range(2, max_instrument_dim + 1)),
        trials=trials,
        seed=seed,
        corrupt=corrupt,
    )
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return tuple(pool.map(lambda fn: fn(ctx), SUITES))
    return tuple(fn(ctx) for fn in SUITES)
