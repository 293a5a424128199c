"""Exact numerics in a truncated Fock space.

Builds the spin (x) boson Hamiltonian and the effective low-energy oscillator
as dense matrices, evolves states by eigendecomposition (exactly unitary at
any time), and computes the quantum Fisher information two independent ways:
a fidelity finite difference and the spectral integral of the evolution
generator.  It also measures how far finite-frequency (Omega/omega = eta)
dynamics sits from the low-frequency closed forms.

Truncation policy: every user-facing routine accepts n_cut=None and then
doubles the basis from AUTO_CUTOFF_START until the requested observables
stop moving (mixed absolute/relative test).  States anti-squeeze near
criticality, with Fock tails decaying only like (1 - 2*epsilon_g)^n, so
near-critical runs legitimately need cutoffs of order 1/epsilon_g; the
doubling ladder finds that automatically.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import (
    CutoffNotConverged,
    InvalidParams,
    RegimeError,
    StepTooLarge,
    TruncationLeak,
)
from .closed_form import BosonInitialState, default_initial_state
from .model import ModelParams, Regime, beyond_critical_frame, effective_oscillator

AUTO_CUTOFF_START = 32
AUTO_CUTOFF_MAX = 4096

#: Fraction of top Fock indices whose total weight is checked after evolution.
TAIL_FRACTION = 0.1
DEFAULT_LEAK_TOL = 1e-8

SPIN_DOWN, SPIN_UP = 0, 1  # block order inside joint vectors


# ----------------------------------------------------------------------
# operators and states
# ----------------------------------------------------------------------

def destroy(n_cut: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_cut, dtype=float)), 1)


def quadratures(n_cut: int) -> tuple[np.ndarray, np.ndarray]:
    """X = (a + a^dag)/sqrt(2) (real) and P = i(a^dag - a)/sqrt(2) (imaginary)."""
    a = destroy(n_cut)
    return (a + a.T) / np.sqrt(2.0), 1j * (a.T - a) / np.sqrt(2.0)


@dataclass
class HermitianOperator:
    """Dense Hermitian matrix with a cached eigendecomposition.

    ``dim`` is n_cut for boson-only operators and 2*n_cut on the joint space.
    """

    matrix: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.matrix)
        residual = np.abs(h - h.conj().T).max()
        if residual > 1e-12:
            raise InvalidParams("matrix", f"hermiticity residual {residual} > 1e-12")
        self.matrix = h
        self._eig: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        if self._eig is None:
            self._eig = np.linalg.eigh(self.matrix)
        return self._eig


@dataclass(frozen=True)
class JointState:
    """Amplitudes over (spin in {down, up}) x (Fock 0..n_cut-1), spin-major."""

    amplitudes: np.ndarray
    n_cut: int

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if len(amps) != 2 * self.n_cut:
            raise InvalidParams("amplitudes", "length must be 2*n_cut")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-10:
            raise InvalidParams("amplitudes", f"norm {norm} != 1 beyond 1e-10")
        object.__setattr__(self, "amplitudes", amps)

    def tail_mass(self) -> float:
        """Probability weight in the top TAIL_FRACTION of Fock indices."""
        return _tail_mass(self.amplitudes, self.n_cut)


def _tail_mass(amps: np.ndarray, n_cut: int) -> float:
    n_tail = max(1, int(n_cut * TAIL_FRACTION))
    blocks = amps.reshape(-1, n_cut)
    return float((np.abs(blocks[:, n_cut - n_tail:]) ** 2).sum())


def spin_down_state(boson: BosonInitialState | np.ndarray, n_cut: int) -> JointState:
    """|down> (x) |boson>, zero-padded to ``n_cut``."""
    b = boson.amplitudes if isinstance(boson, BosonInitialState) else np.asarray(boson)
    if len(b) > n_cut:
        raise InvalidParams("n_cut", "smaller than the boson state length")
    amps = np.zeros(2 * n_cut, dtype=complex)
    amps[SPIN_DOWN * n_cut: SPIN_DOWN * n_cut + len(b)] = b
    return JointState(amps, n_cut)


def _pad(boson: BosonInitialState | np.ndarray, n_cut: int) -> np.ndarray:
    b = boson.amplitudes if isinstance(boson, BosonInitialState) else np.asarray(boson)
    out = np.zeros(n_cut, dtype=complex)
    out[: len(b)] = b
    return out


# ----------------------------------------------------------------------
# Hamiltonian builders
# ----------------------------------------------------------------------

def build_full_hamiltonian(params: ModelParams, n_cut: int) -> HermitianOperator:
    """Joint-space Hamiltonian with the quadratic term, in the lab frame:

    omega*a^dag*a + (Omega/2)*sigma_z + (sqrt(omega*Omega)/2)*g*(a+a^dag)*sigma_x
    + lam*(a+a^dag)^2.
    """
    if n_cut < 4:
        raise InvalidParams("n_cut", f"must be >= 4, got {n_cut}")
    a = destroy(n_cut)
    q = a + a.T  # a + a^dag
    number = a.T @ a
    eye_b = np.eye(n_cut)
    # spin matrices in (down, up) block order
    sz = np.diag([-1.0, 1.0])
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])
    eye_s = np.eye(2)
    h = (
        np.kron(eye_s, params.omega * number + params.lam * (q @ q))
        + np.kron(0.5 * params.Omega * sz, eye_b)
        + np.kron(
            0.5 * np.sqrt(params.omega * params.Omega) * params.g * sx, q
        )
    )
    return HermitianOperator(h)


def build_squeezed_frame_hamiltonian(params: ModelParams, n_cut: int) -> HermitianOperator:
    """Joint-space Hamiltonian after the mode squeeze that absorbs the
    quadratic term:

    omega_bar*a^dag*a + (Omega/2)*sigma_z
    + (sqrt(omega*Omega)/2)*g*(1+4*lam/omega)^(-1/4)*(a+a^dag)*sigma_x.

    This is the frame in which the low-frequency closed forms are written;
    at lam = 0 it coincides with build_full_hamiltonian.
    """
    if n_cut < 4:
        raise InvalidParams("n_cut", f"must be >= 4, got {n_cut}")
    a = destroy(n_cut)
    q = a + a.T
    number = a.T @ a
    eye_b = np.eye(n_cut)
    sz = np.diag([-1.0, 1.0])
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])
    eye_s = np.eye(2)
    omega_bar = effective_oscillator(params).omega_bar
    coupling = (
        0.5
        * np.sqrt(params.omega * params.Omega)
        * params.g
        * (1.0 + 4.0 * params.lam / params.omega) ** -0.25
    )
    h = (
        np.kron(eye_s, omega_bar * number)
        + np.kron(0.5 * params.Omega * sz, eye_b)
        + np.kron(coupling * sx, q)
    )
    return HermitianOperator(h)


def build_effective_hamiltonian(params: ModelParams, n_cut: int) -> HermitianOperator:
    """Boson-only effective oscillator (omega_bar/2)*(P^2 + stiffness*X^2).

    The stiffness is epsilon_g in the normal regime and epsilon_g_alpha past
    the critical point; on the critical line neither reduction applies.
    """
    if n_cut < 4:
        raise InvalidParams("n_cut", f"must be >= 4, got {n_cut}")
    eff = effective_oscillator(params)
    if eff.regime is Regime.NORMAL:
        stiffness = eff.epsilon_g
    elif eff.regime is Regime.SUPERRADIANT:
        stiffness = beyond_critical_frame(params).epsilon_g_alpha
    else:
        raise RegimeError("no effective oscillator on the critical line")
    x, p = quadratures(n_cut)
    h = 0.5 * eff.omega_bar * ((p @ p).real + stiffness * (x @ x))
    return HermitianOperator(h)


# ----------------------------------------------------------------------
# evolution
# ----------------------------------------------------------------------

def evolve(
    h: HermitianOperator,
    psi0: JointState | BosonInitialState | np.ndarray,
    t: float,
    leak_tol: float = DEFAULT_LEAK_TOL,
):
    """exp(-i*H*t)|psi0> by spectral decomposition.

    Raises TruncationLeak when the evolved state puts more than ``leak_tol``
    weight into the top Fock indices (the cutoff is too small for this run).
    Returns the same kind of state object it was given.
    """
    if isinstance(psi0, JointState):
        amps = evolve_joint_grid(h, psi0, [t], leak_tol=leak_tol)[:, 0]
        return JointState(amps, psi0.n_cut)
    amps = evolve_grid(h, psi0, [t], leak_tol=leak_tol)[:, 0]
    if isinstance(psi0, BosonInitialState):
        return BosonInitialState(amps)
    return amps


def _spectral_propagate(h: HermitianOperator, amps0: np.ndarray, ts) -> np.ndarray:
    if len(amps0) != h.dim:
        raise InvalidParams("psi0", f"length {len(amps0)} != operator dim {h.dim}")
    energies, vectors = h.eig()
    ts = np.asarray(ts, dtype=float)
    coeffs = vectors.conj().T @ amps0
    phases = np.exp(-1j * np.outer(energies, ts))
    out = vectors @ (phases * coeffs[:, None])
    norm_err = np.abs(np.linalg.norm(out, axis=0) - 1.0).max()
    if norm_err > 1e-10:
        raise TruncationLeak(f"unitarity lost: max |norm - 1| = {norm_err}")
    return out


def _check_tail(out: np.ndarray, n_cut: int, leak_tol: float) -> None:
    worst = max(_tail_mass(out[:, i], n_cut) for i in range(out.shape[1]))
    if worst > leak_tol:
        raise TruncationLeak(
            f"tail mass {worst:.3e} exceeds {leak_tol:.1e}; raise n_cut"
        )


def evolve_grid(
    h: HermitianOperator,
    psi0,
    ts: Sequence[float],
    leak_tol: float = DEFAULT_LEAK_TOL,
) -> np.ndarray:
    """Boson-only evolution at every time in ``ts``; (dim, len(ts)) array."""
    amps0 = psi0.amplitudes if hasattr(psi0, "amplitudes") else np.asarray(psi0, dtype=complex)
    out = _spectral_propagate(h, amps0, ts)
    _check_tail(out, h.dim, leak_tol)
    return out


def evolve_joint_grid(
    h: HermitianOperator,
    psi0: JointState,
    ts: Sequence[float],
    leak_tol: float = DEFAULT_LEAK_TOL,
) -> np.ndarray:
    """Joint-space evolution, with the tail check on each spin block."""
    out = _spectral_propagate(h, psi0.amplitudes, ts)
    _check_tail(out, psi0.n_cut, leak_tol)
    return out


# ----------------------------------------------------------------------
# automatic cutoff selection
# ----------------------------------------------------------------------

def auto_cutoff(
    run: Callable[[int], np.ndarray],
    start: int = AUTO_CUTOFF_START,
    max_cut: int = AUTO_CUTOFF_MAX,
    rtol: float = 1e-6,
    atol: float = 0.0,
) -> tuple[int, np.ndarray]:
    """Double the cutoff until ``run(n_cut)``'s observables stop moving.

    Convergence: every component changes by less than
    atol + rtol*max(|new|, |old|) when the cutoff doubles.  TruncationLeak
    from ``run`` counts as "keep doubling".  Returns (accepted n_cut, values
    at that cutoff).
    """
    prev = None
    n = start
    while n <= max_cut:
        try:
            values = np.atleast_1d(np.asarray(run(n), dtype=float))
        except TruncationLeak:
            prev = None
            n *= 2
            continue
        if prev is not None:
            tol = atol + rtol * np.maximum(np.abs(values), np.abs(prev))
            if np.all(np.abs(values - prev) <= tol):
                return n, values
        prev = values
        n *= 2
    raise CutoffNotConverged(
        f"observables still moving at n_cut = {max_cut} (rtol={rtol}, atol={atol})"
    )


# ----------------------------------------------------------------------
# quadrature dynamics with an exact engine
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureSeries:
    """Oracle quadrature observables on a time grid."""

    t: np.ndarray
    x_mean: np.ndarray
    x_second: np.ndarray
    x_deriv_g: np.ndarray
    n_cut: int

    @property
    def x_var(self) -> np.ndarray:
        return self.x_second - self.x_mean**2

    @property
    def inv_var(self) -> np.ndarray:
        return self.x_deriv_g**2 / self.x_var


def _series_at_cutoff(
    params: ModelParams,
    ts: np.ndarray,
    psi0: BosonInitialState,
    dg: float,
    n_cut: int,
    builder: Callable[[ModelParams, int], HermitianOperator],
    joint: bool,
    leak_tol: float,
) -> dict[str, np.ndarray]:
    """x, x^2 and the 4-point (Richardson) g-derivative of x at one cutoff."""
    x, _ = quadratures(n_cut)
    x = x.real
    xobs = np.kron(np.eye(2), x) if joint else x

    def measure(gv: float) -> tuple[np.ndarray, np.ndarray]:
        h = builder(replace(params, g=gv), n_cut)
        if joint:
            psi = spin_down_state(psi0, n_cut)
            amps = evolve_joint_grid(h, psi, ts, leak_tol=leak_tol)
        else:
            amps = evolve_grid(h, _pad(psi0, n_cut), ts, leak_tol=leak_tol)
        xa = np.einsum("it,ij,jt->t", amps.conj(), xobs, amps).real
        xxa = np.einsum("it,ij,jt->t", amps.conj(), xobs @ xobs, amps).real
        return xa, xxa

    x0, xx0 = measure(params.g)
    xp1, _ = measure(params.g + dg)
    xm1, _ = measure(params.g - dg)
    xp2, _ = measure(params.g + 0.5 * dg)
    xm2, _ = measure(params.g - 0.5 * dg)
    d_wide = (xp1 - xm1) / (2.0 * dg)
    d_half = (xp2 - xm2) / dg
    deriv = (4.0 * d_half - d_wide) / 3.0  # Richardson: O(dg^4) bias
    return {"x": x0, "xx": xx0, "deriv": deriv, "d_wide": d_wide, "d_half": d_half}


def quadrature_series(
    params: ModelParams,
    ts: Sequence[float],
    psi0: BosonInitialState | None = None,
    dg: float | None = None,
    n_cut: int | None = None,
    builder: Callable[[ModelParams, int], HermitianOperator] = build_effective_hamiltonian,
    joint: bool = False,
    rtol: float = 1e-6,
    atol: float = 1e-9,
    max_cut: int = AUTO_CUTOFF_MAX,
    leak_tol: float = DEFAULT_LEAK_TOL,
) -> QuadratureSeries:
    """<X>_t, <X^2>_t and d<X>_t/dg on a grid, with automatic cutoff.

    The derivative uses a Richardson-extrapolated centered difference with
    base step dg = 1e-5*max(g, 0.01); the two stencils must agree to 1e-3
    relative wherever the derivative is appreciable, else StepTooLarge.
    """
    ts = np.asarray(ts, dtype=float)
    psi0 = psi0 if psi0 is not None else default_initial_state()
    if dg is None:
        dg = 1e-5 * max(params.g, 0.01)

    def converged(prev: dict, new: dict) -> bool:
        # curves cross zero, so convergence is judged per block against the
        # block's own scale, not pointwise
        for key in ("x", "xx", "deriv"):
            scale = max(np.abs(prev[key]).max(), np.abs(new[key]).max(), atol)
            if np.abs(new[key] - prev[key]).max() > atol + rtol * scale:
                return False
        return True

    got = None
    if n_cut is None:
        prev = None
        n = AUTO_CUTOFF_START
        while n <= max_cut:
            try:
                cur = _series_at_cutoff(params, ts, psi0, dg, n, builder, joint, leak_tol)
            except TruncationLeak:
                prev = None
                n *= 2
                continue
            if prev is not None and converged(prev, cur):
                n_cut, got = n, cur
                break
            prev = cur
            n *= 2
        else:
            raise CutoffNotConverged(
                f"quadrature series still moving at n_cut = {max_cut}"
            )
    if got is None:
        got = _series_at_cutoff(params, ts, psi0, dg, n_cut, builder, joint, leak_tol)
    scale = np.abs(got["deriv"]).max()
    if scale > 0 and np.abs(got["d_half"] - got["d_wide"]).max() > 1e-3 * scale:
        raise StepTooLarge(
            "halved and full g-steps disagree beyond 1e-3 of the derivative "
            "scale; the response is nonlinear at this dg"
        )
    return QuadratureSeries(ts, got["x"], got["xx"], got["deriv"], n_cut)


# ----------------------------------------------------------------------
# QFI, two independent ways
# ----------------------------------------------------------------------

def qfi_overlap(
    params: ModelParams,
    t: float,
    psi0: BosonInitialState | None = None,
    dg: float | None = None,
    builder: Callable[[ModelParams, int], HermitianOperator] = build_effective_hamiltonian,
    joint: bool = False,
    n_cut: int | None = None,
    rtol: float = 1e-6,
    max_cut: int = AUTO_CUTOFF_MAX,
) -> float:
    """QFI from the fidelity drop between evolutions at g -/+ dg/2:

    F ~= 8*(1 - |<psi_{g-dg/2}(t)|psi_{g+dg/2}(t)>|) / dg^2.

    With dg=None the step is tuned so the fidelity deficit sits near 1e-6,
    far from both the quadratic-validity ceiling (1e-2) and roundoff.
    Raises StepTooLarge when an explicit dg leaves the deficit above 1e-2.
    """
    psi0 = psi0 if psi0 is not None else default_initial_state()

    def deficit_at(n: int, step: float) -> float:
        def state(gv):
            h = builder(replace(params, g=gv), n)
            if joint:
                return evolve_joint_grid(h, spin_down_state(psi0, n), [t])[:, 0]
            return evolve_grid(h, _pad(psi0, n), [t])[:, 0]

        minus = state(params.g - 0.5 * step)
        plus = state(params.g + 0.5 * step)
        # |<a|b>| can exceed 1 by rounding for near-identical states
        return max(1.0 - abs(np.vdot(minus, plus)), 0.0)

    def qfi_at(n: int) -> float:
        step = dg
        if step is None:
            step = 1e-3 * max(params.g, 0.01)
            for _ in range(40):  # geometric search for deficit ~ 1e-6
                d = deficit_at(n, step)
                if d > 1e-2:
                    step *= 0.25
                    continue
                if d > 0:
                    step *= np.sqrt(1e-6 / max(d, 1e-14))
                    step = min(step, 0.3 * params.g if params.g > 0 else step)
                break
        d = deficit_at(n, step)
        if d > 1e-2:
            raise StepTooLarge(
                f"fidelity deficit {d:.3e} > 1e-2 at dg = {step:.3e}; halve dg"
            )
        return 8.0 * d / step**2

    if n_cut is not None:
        return qfi_at(n_cut)
    _, values = auto_cutoff(lambda n: qfi_at(n), rtol=rtol, max_cut=max_cut)
    return float(values[0])


def generator_qfi(
    params: ModelParams,
    t: float,
    psi0: BosonInitialState | None = None,
    n_cut: int | None = None,
    rtol: float = 1e-6,
    max_cut: int = AUTO_CUTOFF_MAX,
) -> float:
    """QFI from the spectral integral of the evolution generator.

    With H_eff = H0 + zeta*H1 (H0 = wbar/2*P^2, H1 = wbar/2*X^2,
    zeta = epsilon_g), the generator is h = int_0^t H1(s) ds, assembled in
    the eigenbasis as H1_jk * (exp(i*(Ej-Ek)*t) - 1)/(i*(Ej-Ek)) with the
    diagonal (and any |Ej-Ek| < 1e-12 pair) replaced by t.  Then
    F_g = (d epsilon_g/d g)^2 * 4*Var[h].
    """
    eff = effective_oscillator(params)
    if eff.regime is not Regime.NORMAL:
        raise RegimeError("generator_qfi is defined for the normal regime")
    psi0 = psi0 if psi0 is not None else default_initial_state()

    def qfi_at(n: int) -> float:
        x, _ = quadratures(n)
        h1 = 0.5 * eff.omega_bar * (x @ x)
        hz = build_effective_hamiltonian(params, n)
        energies, vectors = hz.eig()
        h1_eig = vectors.T @ h1 @ vectors  # real orthogonal eigenbasis
        de = energies[:, None] - energies[None, :]
        near = np.abs(de) < 1e-12
        safe = np.where(near, 1.0, de)
        kernel = np.where(near, t, (np.exp(1j * de * t) - 1.0) / (1j * safe))
        gen = h1_eig * kernel
        coeffs = vectors.conj().T @ _pad(psi0, n)
        gc_ = gen @ coeffs
        mean = np.real(np.vdot(coeffs, gc_))
        second = np.real(np.vdot(gc_, gc_))
        f_zeta = 4.0 * (second - mean * mean)
        dzeta_dg = -2.0 * params.omega * params.g / (params.omega + 4.0 * params.lam)
        return dzeta_dg**2 * f_zeta

    if n_cut is not None:
        return qfi_at(n_cut)
    _, values = auto_cutoff(lambda n: qfi_at(n), rtol=rtol, max_cut=max_cut)
    return float(values[0])


def generator_qfi_grid(
    params: ModelParams,
    ts: Sequence[float],
    psi0: BosonInitialState | None = None,
    n_cut: int | None = None,
    rtol: float = 1e-6,
    max_cut: int = AUTO_CUTOFF_MAX,
    return_n_cut: bool = False,
):
    """generator_qfi evaluated on a whole time grid with one diagonalization
    per cutoff; cutoff convergence is measured jointly across the grid."""
    eff = effective_oscillator(params)
    if eff.regime is not Regime.NORMAL:
        raise RegimeError("generator_qfi is defined for the normal regime")
    psi0 = psi0 if psi0 is not None else default_initial_state()
    ts = np.asarray(ts, dtype=float)

    def qfi_at(n: int) -> np.ndarray:
        x, _ = quadratures(n)
        h1 = 0.5 * eff.omega_bar * (x @ x)
        hz = build_effective_hamiltonian(params, n)
        energies, vectors = hz.eig()
        h1_eig = vectors.T @ h1 @ vectors
        de = energies[:, None] - energies[None, :]
        near = np.abs(de) < 1e-12
        safe = np.where(near, 1.0, de)
        coeffs = vectors.conj().T @ _pad(psi0, n)
        dzeta_dg = -2.0 * params.omega * params.g / (params.omega + 4.0 * params.lam)
        out = np.empty(len(ts))
        for i, t in enumerate(ts):
            kernel = np.where(near, t, (np.exp(1j * de * t) - 1.0) / (1j * safe))
            gc_ = (h1_eig * kernel) @ coeffs
            mean = np.real(np.vdot(coeffs, gc_))
            second = np.real(np.vdot(gc_, gc_))
            out[i] = dzeta_dg**2 * 4.0 * (second - mean * mean)
        return out

    if n_cut is not None:
        values = qfi_at(n_cut)
        return (values, n_cut) if return_n_cut else values
    n_cut, values = auto_cutoff(qfi_at, rtol=rtol, max_cut=max_cut)
    return (values, n_cut) if return_n_cut else values


def verify_reciprocal_relation(params: ModelParams, n_cut: int) -> float:
    """Max interior-block residual of the ladder identity closing the
    generator's commutator series:

        [H_eff, Lambda] = sqrt(epsilon)*Lambda,
        Lambda = i*sqrt(epsilon)*M - N,
        M = -i*[H0, H1],  N = -[H_eff, [H0, H1]].

    The identity is exact in the untruncated algebra; truncation corrupts the
    top rows, so the residual is evaluated on the lowest 80% of Fock indices.
    """
    eff = effective_oscillator(params)
    if eff.regime is not Regime.NORMAL:
        raise RegimeError("reciprocal relation is checked in the normal regime")
    x, p = quadratures(n_cut)
    h0 = 0.5 * eff.omega_bar * (p @ p)
    h1 = 0.5 * eff.omega_bar * (x @ x).astype(complex)
    hz = h0 + eff.epsilon_g * h1
    comm01 = h0 @ h1 - h1 @ h0
    m_op = -1j * comm01
    n_op = -(hz @ comm01 - comm01 @ hz)
    lam_op = 1j * np.sqrt(eff.epsilon) * m_op - n_op
    residual = (hz @ lam_op - lam_op @ hz) - np.sqrt(eff.epsilon) * lam_op
    interior = int(0.8 * n_cut)
    return float(np.abs(residual[:interior, :interior]).max())


# ----------------------------------------------------------------------
# finite-frequency discrepancy
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class FrequencyPoint:
    """One finite-frequency comparison at tau_n."""

    eta: float
    n: int
    tau: float
    inv_var_exact: float
    inv_var_limit: float
    delta: float
    n_cut: int


def finite_frequency_point(
    params: ModelParams,
    eta: float,
    n: int = 1,
    dg: float | None = None,
    n_cut: int | None = None,
    rtol: float = 1e-6,
    atol: float = 1e-9,
    max_cut: int = AUTO_CUTOFF_MAX,
) -> FrequencyPoint:
    """Finite-frequency inverted variance against the low-frequency peak.

    The exact side evolves |down> (x) (|0>+i|1>)/sqrt(2) under the squeezed-
    frame Hamiltonian at Omega = eta*omega (the frame the closed forms live
    in) and measures <X>, <X^2> and the Richardson-centered d<X>/dg at the
    low-frequency optimal time tau_n = 2*pi*n/sqrt(epsilon).
    """
    from .closed_form import inverted_variance_peak, optimal_times

    if eta < 10:
        raise InvalidParams("eta", f"must be >= 10, got {eta}")
    full_params = replace(params, Omega=eta * params.omega)
    tau = float(optimal_times(params, n)[-1])
    series = quadrature_series(
        full_params,
        [tau],
        dg=dg,
        n_cut=n_cut,
        builder=build_squeezed_frame_hamiltonian,
        joint=True,
        rtol=rtol,
        atol=atol,
        max_cut=max_cut,
    )
    i_exact = float(series.inv_var[0])
    i_limit = inverted_variance_peak(params, n)
    return FrequencyPoint(
        eta=eta,
        n=n,
        tau=tau,
        inv_var_exact=i_exact,
        inv_var_limit=i_limit,
        delta=(i_exact - i_limit) / i_limit,
        n_cut=series.n_cut,
    )


def finite_frequency_discrepancy(
    params: ModelParams,
    eta: float,
    n: int = 1,
    dg: float | None = None,
    n_cut: int | None = None,
    rtol: float = 1e-6,
    atol: float = 1e-9,
    max_cut: int = AUTO_CUTOFF_MAX,
) -> float:
    """delta = (I_g^(eta)(tau_n) - I_g(tau_n)) / I_g(tau_n); see
    finite_frequency_point for the protocol."""
    return finite_frequency_point(
        params, eta, n=n, dg=dg, n_cut=n_cut, rtol=rtol, atol=atol, max_cut=max_cut
    ).delta
