"""Walker propagation for constrained-path AFQMC on TFI systems.

Walkers are separable states with a positive weight and a cached trial
overlap O_tr(phi) = max(<psi_tr, phi>, 0).  One imaginary-time step applies
a half one-body propagator, then every lattice bond stochastically (one
auxiliary field per bond, importance-sampled against the trial), then the
second half one-body propagator:

  * one-body:  phi <- B_half phi,  w <- w * O_tr(phi') / O_tr(phi);
  * per bond:  x sampled with probability proportional to O_tr(b(x) phi),
               w <- w * N  with  N = (O_tr(b(+1)phi) + O_tr(b(-1)phi))
                                     / (2 O_tr(phi)),
               which is independent of the sampled x.

A walker whose overlap becomes non-positive is killed (weight 0) and stays
inert: never propagated, never counted.

The ensemble is stored struct-of-arrays (one (n_walkers, 2) array per chain
position) so every update is vectorized over walkers.  Trial overlaps are
maintained through incremental left/right partial contractions; a bond at
chain positions (p, q) re-contracts only the segment [p, q].  Randomness
comes from counter-based Philox streams keyed by (seed, purpose, step,
bond), so trajectories are reproducible for a fixed seed regardless of
thread count.  Walker site vectors are renormalized to unit norm at the
end of every step; the represented ensemble sum_k w_k phi_k / O_tr(phi_k)
is invariant under that rescaling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DeadEnsembleError, DimensionMismatchError
from .tensor_train import ProductState, TensorTrain, tt_product_overlap, tt_to_dense

_PURPOSE_BOND = 1
_PURPOSE_POP = 2


def stream(seed, purpose, step=0, index=0):
    """Deterministic counter-based generator for one (purpose, step, index) slot."""
    key = [int(seed) & (2 ** 64 - 1), int(purpose)]
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, int(step), int(index)]))


@dataclass
class Walker:
    """A separable walker: product state, weight, cached trial overlap."""

    state: ProductState
    weight: float
    overlap: float


class TrialHandle:
    """A trial wavefunction usable for overlaps: a TT or a dense vector.

    Product-state trials are held as rank-1 TTs.  The handle is immutable;
    overlap caches are built per ensemble, not stored here.
    """

    __slots__ = ("kind", "tt", "dense_vec", "d", "cmats", "shapes")

    def __init__(self, kind, d, tt=None, dense_vec=None):
        self.kind = kind
        self.d = d
        self.tt = tt
        self.dense_vec = dense_vec
        if kind == "tt":
            self.shapes = [(c.shape[0], c.shape[2]) for c in tt.cores]
            self.cmats = [
                np.ascontiguousarray(c.transpose(1, 0, 2).reshape(2, -1)) for c in tt.cores
            ]
        elif kind == "dense":
            self.shapes = None
            self.cmats = None
        else:
            raise ValueError(f"unknown trial kind {kind!r}")

    @classmethod
    def from_tt(cls, tt):
        return cls("tt", tt.d, tt=tt)

    @classmethod
    def from_product(cls, phi):
        return cls.from_tt(phi.as_tt())

    @classmethod
    def from_dense(cls, vec):
        vec = np.array(vec, dtype=np.float64)
        d = int(round(np.log2(vec.size)))
        if 2 ** d != vec.size:
            raise ValueError(f"dense trial length {vec.size} is not a power of 2")
        vec.flags.writeable = False
        return cls("dense", d, dense_vec=vec)

    def overlap(self, phi):
        """<psi_tr, phi> by direct contraction (no cache)."""
        if phi.d != self.d:
            raise DimensionMismatchError(f"trial d={self.d}, state d={phi.d}")
        if self.kind == "tt":
            return tt_product_overlap(self.tt, phi)
        return float(self.dense_vec @ phi.to_dense())

    def to_dense(self, cap=20):
        if self.kind == "dense":
            return np.asarray(self.dense_vec).copy()
        return tt_to_dense(self.tt, cap=cap)

    def as_product_sites(self):
        """Site vectors if this trial is separable (rank-1), else None."""
        if self.kind != "tt" or any(r != 1 for r in self.tt.ranks):
            return None
        return np.stack([c.reshape(2) for c in self.tt.cores])


class _TTCache:
    """Incremental <psi_tr, phi_k> partials for a TT trial over an ensemble."""

    def __init__(self, handle, sites):
        self.handle = handle
        self.sites = sites  # shared list owned by the Ensemble
        d = handle.d
        n = sites[0].shape[0]
        self.left = [None] * (d + 1)
        self.right = [None] * (d + 1)
        self.left[0] = np.ones((n, 1))
        self.right[d] = np.ones((n, 1))
        self.lv = 0  # left[m] valid for m <= lv
        self.rv = d  # right[m] valid for m >= rv

    def _site_mat(self, m, vecs=None):
        v = self.sites[m] if vecs is None else vecs
        rl, rr = self.handle.shapes[m]
        return (v @ self.handle.cmats[m]).reshape(-1, rl, rr)

    def ensure_left(self, m):
        while self.lv < m:
            j = self.lv
            M = self._site_mat(j)
            self.left[j + 1] = np.matmul(self.left[j][:, None, :], M)[:, 0, :]
            self.lv += 1

    def ensure_right(self, m):
        while self.rv > m:
            j = self.rv - 1
            M = self._site_mat(j)
            self.right[j] = np.matmul(M, self.right[j + 1][:, :, None])[:, :, 0]
            self.rv -= 1

    def note_sites_changed(self, p, q):
        self.lv = min(self.lv, p)
        self.rv = max(self.rv, q + 1)

    def note_all_changed(self):
        self.lv = 0
        self.rv = self.handle.d

    def overlaps(self):
        self.ensure_left(self.handle.d)
        return self.left[self.handle.d][:, 0].copy()

    def bond_overlaps(self, p, q, fac_p, fac_q):
        """(<psi, b(+1) phi_k>, <psi, b(-1) phi_k>) for the bond at (p, q)."""
        self.ensure_left(p)
        self.ensure_right(q + 1)
        L = self.left[p]
        R = self.right[q + 1]
        inner = [self._site_mat(m) for m in range(p + 1, q)]
        out = {}
        for x in (1, -1):
            Mp = self._site_mat(p, self.sites[p] * fac_p[x])
            T = np.matmul(L[:, None, :], Mp)[:, 0, :]
            for M in inner:
                T = np.matmul(T[:, None, :], M)[:, 0, :]
            Mq = self._site_mat(q, self.sites[q] * fac_q[x])
            T = np.matmul(T[:, None, :], Mq)[:, 0, :]
            out[x] = np.einsum("kr,kr->k", T, R)
        return out[1], out[-1]

    def apply_bond(self, p, q, act, sel_plus, fac_p, fac_q):
        self.note_sites_changed(p, q)

    def ensure_measure(self):
        self.ensure_left(self.handle.d)
        self.ensure_right(0)

    def _one_site_overlap(self, m, vecs):
        M = self._site_mat(m, vecs)
        T = np.matmul(self.left[m][:, None, :], M)[:, 0, :]
        return np.einsum("kr,kr->k", T, self.right[m + 1])

    def sigma_x_overlaps(self, m):
        return self._one_site_overlap(m, self.sites[m][:, ::-1])

    def zz_overlaps(self, p, q):
        sign = np.array([1.0, -1.0])
        L = self.left[p]
        T = np.matmul(L[:, None, :], self._site_mat(p, self.sites[p] * sign))[:, 0, :]
        for m in range(p + 1, q):
            T = np.matmul(T[:, None, :], self._site_mat(m))[:, 0, :]
        T = np.matmul(T[:, None, :], self._site_mat(q, self.sites[q] * sign))[:, 0, :]
        return np.einsum("kr,kr->k", T, self.right[q + 1])

    def gather(self, src):
        for m in range(self.lv + 1):
            self.left[m] = self.left[m][src]
        for m in range(self.rv, self.handle.d + 1):
            self.right[m] = self.right[m][src]


class _DenseCache:
    """Kronecker-expansion overlap machinery for a dense-vector trial."""

    def __init__(self, handle, sites):
        self.handle = handle
        self.sites = sites
        self.d = handle.d
        self.psi = handle.dense_vec
        states = np.arange(2 ** self.d)
        self.bits = [((states >> (self.d - 1 - m)) & 1) for m in range(self.d)]
        self._flips = {}
        self.vec = None

    def _ensure_vec(self):
        if self.vec is None:
            v = self.sites[0]
            for m in range(1, self.d):
                v = (v[:, :, None] * self.sites[m][:, None, :]).reshape(v.shape[0], -1)
            self.vec = v

    def note_sites_changed(self, p, q):
        self.vec = None

    def note_all_changed(self):
        self.vec = None

    def overlaps(self):
        self._ensure_vec()
        return self.vec @ self.psi

    def bond_overlaps(self, p, q, fac_p, fac_q):
        self._ensure_vec()
        out = {}
        for x in (1, -1):
            psx = self.psi * fac_p[x][self.bits[p]] * fac_q[x][self.bits[q]]
            out[x] = self.vec @ psx
        return out[1], out[-1]

    def apply_bond(self, p, q, act, sel_plus, fac_p, fac_q):
        if self.vec is None:
            return
        d_plus = fac_p[1][self.bits[p]] * fac_q[1][self.bits[q]]
        d_minus = fac_p[-1][self.bits[p]] * fac_q[-1][self.bits[q]]
        diag = np.where(sel_plus[:, None], d_plus, d_minus)
        self.vec = np.where(act[:, None], self.vec * diag, self.vec)

    def ensure_measure(self):
        self._ensure_vec()

    def sigma_x_overlaps(self, m):
        if m not in self._flips:
            states = np.arange(2 ** self.d)
            self._flips[m] = self.psi[states ^ (1 << (self.d - 1 - m))]
        return self.vec @ self._flips[m]

    def zz_overlaps(self, p, q):
        sgn = (1.0 - 2.0 * self.bits[p]) * (1.0 - 2.0 * self.bits[q])
        return self.vec @ (self.psi * sgn)

    def gather(self, src):
        if self.vec is not None:
            self.vec = self.vec[src]


def _make_cache(handle, sites):
    if handle.kind == "tt":
        return _TTCache(handle, sites)
    return _DenseCache(handle, sites)


class Ensemble:
    """A fixed-size walker population, stored struct-of-arrays.

    ``sites[m]`` is the (n_walkers, 2) array of site-m vectors, ``weight``
    and ``ovlp`` the per-walker weight and cached trial overlap.  ``step``
    counts completed imaginary-time steps; ``seed`` keys the random streams.
    """

    def __init__(self, sites, weight, ovlp, seed, step=0):
        self.sites = [np.array(s, dtype=np.float64) for s in sites]
        self.weight = np.array(weight, dtype=np.float64)
        self.ovlp = np.array(ovlp, dtype=np.float64)
        self.seed = int(seed)
        self.step = int(step)
        self.reanchor_kill_counts = []
        self._cache = None
        self._trial = None

    @classmethod
    def from_trial_product(cls, trial, n_walkers, seed):
        """All walkers initialized to the (separable) trial, weight 1."""
        psites = trial.as_product_sites()
        if psites is None:
            raise ValueError("initial walkers need a separable (rank-1) trial")
        sites = [np.tile(psites[m], (n_walkers, 1)) for m in range(psites.shape[0])]
        ens = cls(sites, np.ones(n_walkers), np.empty(n_walkers), seed)
        cache = ens.attach(trial)
        ens.ovlp = np.maximum(cache.overlaps(), 0.0)
        if np.any(ens.ovlp <= 0.0):
            raise ValueError("initial trial has non-positive self-overlap")
        return ens

    @classmethod
    def from_walkers(cls, walkers, seed=0, step=0):
        d = walkers[0].state.d
        sites = [np.stack([w.state.sites[m] for w in walkers]) for m in range(d)]
        return cls(
            sites,
            [w.weight for w in walkers],
            [w.overlap for w in walkers],
            seed,
            step,
        )

    @property
    def n_walkers(self):
        return self.weight.shape[0]

    @property
    def d(self):
        return len(self.sites)

    @property
    def alive(self):
        return self.weight > 0.0

    def walker(self, k):
        state = ProductState(np.stack([self.sites[m][k] for m in range(self.d)]))
        return Walker(state=state, weight=float(self.weight[k]), overlap=float(self.ovlp[k]))

    def walkers(self):
        return [self.walker(k) for k in range(self.n_walkers)]

    def attach(self, trial):
        """Bind (or reuse) the overlap cache for this trial."""
        if self._cache is None or self._trial is not trial:
            self._cache = _make_cache(trial, self.sites)
            self._trial = trial
        return self._cache


def _write_masked(arr, mask, all_true, values):
    if all_true:
        return values
    return np.where(mask if values.ndim == 1 else mask[:, None], values, arr)


def _one_body_half(ens, cache, prop, alive, all_alive, normalize):
    """phi <- B_half phi for alive walkers; weight by the overlap ratio.

    With ``normalize`` the site vectors are rescaled to unit norm afterwards
    and the cached overlap refreshed from a full canonical sweep, so stored
    overlaps always come from the same contraction path.
    """
    B = prop.one_body_half
    scale = np.ones(ens.n_walkers)
    for m in range(ens.d):
        new = ens.sites[m] @ B
        if normalize:
            norms = np.linalg.norm(new, axis=1)
            scale *= norms
            new = new / norms[:, None]
        ens.sites[m] = _write_masked(ens.sites[m], alive, all_alive, new)
    cache.note_all_changed()
    fresh = cache.overlaps()
    fresh = np.maximum(fresh, 0.0)
    old = np.where(ens.ovlp > 0.0, ens.ovlp, 1.0)
    ratio = fresh * scale / old
    ens.weight = _write_masked(ens.weight, alive, all_alive, ens.weight * ratio)
    ens.ovlp = _write_masked(ens.ovlp, alive, all_alive, fresh)


def _bond_factors(prop):
    fac_p = {x: prop.bond_prefactor * prop.bond_site_factors(x) for x in (1, -1)}
    fac_q = {x: prop.bond_site_factors(x) for x in (1, -1)}
    return fac_p, fac_q


def _sample_bond_kernel(ens, cache, p, q, fac_p, fac_q, uniforms, alive, all_alive):
    """One stochastic bond update, vectorized over walkers.

    Returns the updated alive mask (walkers with both field overlaps
    non-positive are killed).
    """
    o_plus, o_minus = cache.bond_overlaps(p, q, fac_p, fac_q)
    o_plus = np.maximum(o_plus, 0.0)
    o_minus = np.maximum(o_minus, 0.0)
    tot = o_plus + o_minus
    sel_plus = uniforms * tot < o_plus
    act = alive & (tot > 0.0)
    killed = alive & ~act
    all_act = bool(act.all())

    denom = np.where(ens.ovlp > 0.0, ens.ovlp, 1.0)
    norm_const = 0.5 * tot / denom
    ens.weight = _write_masked(ens.weight, act, all_act, ens.weight * norm_const)
    if killed.any():
        ens.weight = np.where(killed, 0.0, ens.weight)
    ens.ovlp = _write_masked(ens.ovlp, act, all_act, np.where(sel_plus, o_plus, o_minus))

    fp = np.where(sel_plus[:, None], fac_p[1], fac_p[-1])
    fq = np.where(sel_plus[:, None], fac_q[1], fac_q[-1])
    ens.sites[p] = _write_masked(ens.sites[p], act, all_act, ens.sites[p] * fp)
    ens.sites[q] = _write_masked(ens.sites[q], act, all_act, ens.sites[q] * fq)
    cache.apply_bond(p, q, act, sel_plus, fac_p, fac_q)
    return alive & (tot > 0.0)


def apply_one_body(walker, trial, propagators):
    """Deterministic half-step on a single walker; returns the new walker."""
    if walker.weight <= 0.0:
        return Walker(walker.state, walker.weight, walker.overlap)
    ens = Ensemble.from_walkers([walker])
    cache = ens.attach(trial)
    alive = ens.alive
    _one_body_half(ens, cache, propagators, alive, True, normalize=False)
    return ens.walker(0)


def sample_bond(walker, bond, trial, propagators, rng):
    """Stochastic update of a single walker on one bond (chain positions)."""
    if walker.weight <= 0.0 or walker.overlap <= 0.0:
        return Walker(walker.state, walker.weight, walker.overlap)
    p, q = sorted(bond)
    ens = Ensemble.from_walkers([walker])
    cache = ens.attach(trial)
    fac_p, fac_q = _bond_factors(propagators)
    u = np.array([rng.random()])
    _sample_bond_kernel(ens, cache, p, q, fac_p, fac_q, u, ens.alive, True)
    return ens.walker(0)


def step(ensemble, trial, lattice, propagators):
    """Advance every positive-weight walker one full imaginary-time step."""
    alive = ensemble.alive
    if not alive.any():
        raise DeadEnsembleError(
            "all walkers dead before step", {"step": ensemble.step}
        )
    all_alive = bool(alive.all())
    cache = ensemble.attach(trial)
    fac_p, fac_q = _bond_factors(propagators)

    _one_body_half(ensemble, cache, propagators, alive, all_alive, normalize=False)
    alive = ensemble.alive
    all_alive = bool(alive.all())

    for b_idx, (p, q) in enumerate(lattice.chain_bonds):
        gen = stream(ensemble.seed, _PURPOSE_BOND, ensemble.step, b_idx)
        uniforms = gen.random(ensemble.n_walkers)
        alive = _sample_bond_kernel(
            ensemble, cache, p, q, fac_p, fac_q, uniforms, alive, all_alive
        )
        all_alive = bool(alive.all())

    _one_body_half(ensemble, cache, propagators, alive, all_alive, normalize=True)

    ensemble.step += 1
    if not ensemble.alive.any():
        raise DeadEnsembleError("all walkers died during step", {"step": ensemble.step})
    return ensemble


def population_control(ensemble, rng):
    """Comb resampling: restores unit weights, preserves the population size.

    Weights are first normalized to mean 1; a single uniform offset then
    places a comb over the cumulative weights, so walker k receives a number
    of copies whose expectation is its normalized weight.
    """
    w = ensemble.weight
    n = w.shape[0]
    total = float(w.sum())
    if total <= 0.0:
        raise DeadEnsembleError("population control with no positive weight")
    wn = w * (n / total)
    offset = float(rng.random())
    marks = np.ceil(offset + np.cumsum(wn)).astype(np.int64)
    marks[-1] = n + 1
    copies = np.diff(np.concatenate(([1], marks)))
    src = np.repeat(np.arange(n), copies)
    for m in range(ensemble.d):
        ensemble.sites[m] = ensemble.sites[m][src]
    ensemble.ovlp = ensemble.ovlp[src]
    ensemble.weight = np.ones(n)
    if ensemble._cache is not None:
        ensemble._cache.gather(src)
    return ensemble


def comb_copy_counts(weights, offset):
    """Copy count per walker for a given comb offset (weights already mean-1)."""
    w = np.asarray(weights, dtype=np.float64)
    marks = np.ceil(offset + np.cumsum(w)).astype(np.int64)
    marks[-1] = w.shape[0] + 1
    return np.diff(np.concatenate(([1], marks)))


def reanchor_overlaps(ensemble, new_trial):
    """Swap the trial: recompute cached overlaps, kill non-positive ones."""
    alive = ensemble.alive
    cache = ensemble.attach(new_trial)
    fresh = np.maximum(cache.overlaps(), 0.0)
    killed = alive & (fresh <= 0.0)
    ensemble.ovlp = np.where(alive, fresh, ensemble.ovlp)
    ensemble.weight = np.where(killed, 0.0, ensemble.weight)
    kills = int(killed.sum())
    ensemble.reanchor_kill_counts.append(kills)
    if not ensemble.alive.any():
        raise DeadEnsembleError(
            "re-anchoring killed every walker",
            {"step": ensemble.step, "kills": kills},
        )
    return ensemble
