"""Angular algebra for coupled two-electron spherical harmonics at M = 0.

Channels are bipolar-harmonic labels (L, l1, l2); the linearly polarized
field only connects natural-parity channels, parity (-1)^(l1+l2) = (-1)^L,
reachable from the (0,0,0) ground symmetry.  Clebsch-Gordan coefficients
use the closed Racah sum in exact integer arithmetic before a single final
square root, so values are accurate to machine precision and cacheable.

Coupling coefficient conventions (all real):

* ``pz_velocity_coupling`` returns the recoupling factor C such that the
  velocity-gauge block for electron 1, transition l1 -> l1 +/- 1, is
  C * [d/dr - (l1+1)/r] resp. C * [d/dr + l1/r] acting on the reduced
  radial function, times -i A_z(t).  C equals the matrix element of
  cos(theta_e) between the two coupled harmonics.
* ``multipole_coupling`` returns <c'|P_lambda(cos theta_12)|c> used with the
  radial kernel r_<^lambda / r_>^(lambda+1).
* ``legendre_field_coupling`` returns <c'|P_lambda(cos theta_e)|c> for a
  single-electron multipole field (the dressed-potential components).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

__all__ = [
    "Channel",
    "ChannelSet",
    "clebsch_gordan",
    "wigner_3j",
    "enumerate_channels",
    "one_electron_channels",
    "pz_velocity_coupling",
    "multipole_coupling",
    "legendre_field_coupling",
]


# =====================================================================
# Wigner algebra
# =====================================================================

@lru_cache(maxsize=None)
def _cg_integer(l1: int, m1: int, l2: int, m2: int, L: int, M: int) -> float:
    if m1 + m2 != M:
        return 0.0
    if not (abs(l1 - l2) <= L <= l1 + l2):
        return 0.0
    if abs(m1) > l1 or abs(m2) > l2 or abs(M) > L:
        return 0.0
    f = math.factorial
    delta = Fraction(
        f(l1 + l2 - L) * f(l1 - l2 + L) * f(-l1 + l2 + L), f(l1 + l2 + L + 1)
    )
    pref = (
        delta
        * (2 * L + 1)
        * f(l1 + m1) * f(l1 - m1)
        * f(l2 + m2) * f(l2 - m2)
        * f(L + M) * f(L - M)
    )
    tmin = max(0, l2 - L - m1, l1 + m2 - L)
    tmax = min(l1 + l2 - L, l1 - m1, l2 + m2)
    s = Fraction(0)
    for t in range(tmin, tmax + 1):
        den = (
            f(t)
            * f(l1 + l2 - L - t)
            * f(l1 - m1 - t)
            * f(l2 + m2 - t)
            * f(L - l2 + m1 + t)
            * f(L - l1 - m2 + t)
        )
        s += Fraction((-1) ** t, den)
    if s == 0:
        return 0.0
    return float(s) * math.sqrt(float(pref))


def clebsch_gordan(l1: int, m1: int, l2: int, m2: int, L: int, M: int) -> float:
    """<l1 m1 l2 m2 | L M> for integer angular momenta (Condon-Shortley)."""
    for name, v in (("l1", l1), ("m1", m1), ("l2", l2), ("m2", m2), ("L", L), ("M", M)):
        if not isinstance(v, (int,)):
            raise TypeError(f"{name} must be an integer, got {v!r}")
    if l1 < 0 or l2 < 0 or L < 0:
        raise ValueError("angular momenta must be non-negative")
    return _cg_integer(l1, m1, l2, m2, L, M)


def wigner_3j(j1: int, j2: int, j3: int, m1: int, m2: int, m3: int) -> float:
    """Wigner 3j symbol via the Clebsch-Gordan relation."""
    if m1 + m2 + m3 != 0:
        return 0.0
    cg = clebsch_gordan(j1, m1, j2, m2, j3, -m3)
    return (-1) ** (j1 - j2 - m3) / math.sqrt(2 * j3 + 1) * cg


@lru_cache(maxsize=None)
def _c_tensor_element(lp: int, mp: int, lam: int, mu: int, l: int, m: int) -> float:
    """<l' m'| C_{lambda mu} |l m> with C the Racah-normalized spherical tensor."""
    if mp != m + mu:
        return 0.0
    red = wigner_3j(lp, lam, l, 0, 0, 0)
    if red == 0.0:
        return 0.0
    geo = wigner_3j(lp, lam, l, -mp, mu, m)
    return (-1) ** mp * math.sqrt((2 * lp + 1) * (2 * l + 1)) * red * geo


def _cos_ladder(l: int, m: int) -> float:
    """a_l^m in cos(theta) Y_l^m = a_l^m Y_{l+1}^m + a_{l-1}^m Y_{l-1}^m."""
    num = (l + 1) ** 2 - m * m
    if num <= 0:
        return 0.0
    return math.sqrt(num / ((2 * l + 1) * (2 * l + 3)))


# =====================================================================
# Channels
# =====================================================================

@dataclass(frozen=True, order=True)
class Channel:
    """Coupled-harmonic label (L, l1, l2) at total M = 0."""

    L: int
    l1: int
    l2: int

    @property
    def parity(self) -> int:
        return (-1) ** (self.l1 + self.l2)


@dataclass
class ChannelSet:
    """Ordered channel list for one- or two-electron expansions.

    For one-electron sets, ``channels`` holds plain integers l; for
    two-electron sets it holds :class:`Channel` labels sorted by (L, l1, l2).
    ``exchange_map[k]`` gives the index of the l1 <-> l2 mirrored channel.
    """

    channels: tuple
    lmax: int
    Lmax: int
    two_electron: bool
    symmetry: str
    exchange_map: tuple | None = None

    def __post_init__(self):
        self._index = {c: k for k, c in enumerate(self.channels)}

    def __len__(self) -> int:
        return len(self.channels)

    def __iter__(self):
        return iter(self.channels)

    def index(self, c) -> int:
        return self._index[c]

    def subset(self, keep) -> "ChannelSet":
        """New set restricted to the given channel labels (order preserved)."""
        kept = tuple(c for c in self.channels if c in set(keep))
        if not kept:
            raise ValueError("channel subset is empty")
        cs = ChannelSet(
            channels=kept,
            lmax=self.lmax,
            Lmax=self.Lmax,
            two_electron=self.two_electron,
            symmetry=self.symmetry,
        )
        if self.two_electron:
            ex = []
            for c in kept:
                mirror = Channel(c.L, c.l2, c.l1)
                ex.append(cs.index(mirror) if mirror in set(kept) else -1)
            cs.exchange_map = tuple(ex)
        return cs


def enumerate_channels(lmax: int, Lmax: int, symmetry: str = "singlet") -> ChannelSet:
    """Natural-parity channels reachable from (0,0,0).

    Reachability closure walks dipole steps (one l changes by 1, L changes
    by 1) and scalar electron-electron multipole steps (both l change with a
    common even-parity rank, L fixed); the latter is what populates the
    (0,l,l) blocks when Lmax = 0.
    """
    if lmax < 0 or Lmax < 0:
        raise ValueError(f"lmax and Lmax must be >= 0, got {lmax}, {Lmax}")
    if symmetry not in ("singlet", "none"):
        raise ValueError(f"unknown symmetry {symmetry!r}")

    def valid(c: Channel) -> bool:
        return (
            0 <= c.l1 <= lmax
            and 0 <= c.l2 <= lmax
            and abs(c.l1 - c.l2) <= c.L <= min(c.l1 + c.l2, Lmax)
            and c.parity == (-1) ** c.L
        )

    start = Channel(0, 0, 0)
    seen = {start}
    frontier = [start]
    while frontier:
        c = frontier.pop()
        cand = []
        for dl in (-1, 1):
            for dL in (-1, 1):
                cand.append(Channel(c.L + dL, c.l1 + dl, c.l2))
                cand.append(Channel(c.L + dL, c.l1, c.l2 + dl))
        for lam in range(1, 2 * lmax + 1):
            for l1p in range(abs(c.l1 - lam), min(c.l1 + lam, lmax) + 1):
                if (l1p + lam + c.l1) % 2:
                    continue
                for l2p in range(abs(c.l2 - lam), min(c.l2 + lam, lmax) + 1):
                    if (l2p + lam + c.l2) % 2:
                        continue
                    cand.append(Channel(c.L, l1p, l2p))
        for nc in cand:
            if nc not in seen and valid(nc):
                seen.add(nc)
                frontier.append(nc)

    ordered = tuple(sorted(seen))
    cs = ChannelSet(
        channels=ordered,
        lmax=lmax,
        Lmax=Lmax,
        two_electron=True,
        symmetry=symmetry,
    )
    cs.exchange_map = tuple(cs.index(Channel(c.L, c.l2, c.l1)) for c in ordered)
    return cs


def one_electron_channels(lmax: int) -> ChannelSet:
    """l = 0..lmax ladder for a single electron at m = 0."""
    if lmax < 0:
        raise ValueError(f"lmax must be >= 0, got {lmax}")
    return ChannelSet(
        channels=tuple(range(lmax + 1)),
        lmax=lmax,
        Lmax=lmax,
        two_electron=False,
        symmetry="none",
    )


# =====================================================================
# Coupling coefficients
# =====================================================================

def _m_range(c: Channel) -> range:
    lo = max(-c.l1, -c.l2)
    hi = min(c.l1, c.l2)
    return range(lo, hi + 1)


@lru_cache(maxsize=None)
def _pz_coupling_2e(Li: int, l1i: int, l2i: int, Lf: int, l1f: int, l2f: int, electron: int) -> float:
    ci = Channel(Li, l1i, l2i)
    cf = Channel(Lf, l1f, l2f)
    if electron == 1:
        if cf.l2 != ci.l2 or abs(cf.l1 - ci.l1) != 1:
            return 0.0
        lsm = min(ci.l1, cf.l1)  # ladder factor index a_l^m with l the smaller
        total = 0.0
        for m in _m_range(ci):
            if abs(m) > cf.l1 or abs(-m) > cf.l2:
                continue
            a = _cos_ladder(lsm, m)
            total += (
                clebsch_gordan(ci.l1, m, ci.l2, -m, ci.L, 0)
                * a
                * clebsch_gordan(cf.l1, m, cf.l2, -m, cf.L, 0)
            )
        return total
    else:
        if cf.l1 != ci.l1 or abs(cf.l2 - ci.l2) != 1:
            return 0.0
        lsm = min(ci.l2, cf.l2)
        total = 0.0
        for m in _m_range(ci):
            if abs(m) > cf.l1 or abs(-m) > cf.l2:
                continue
            a = _cos_ladder(lsm, -m)
            total += (
                clebsch_gordan(ci.l1, m, ci.l2, -m, ci.L, 0)
                * a
                * clebsch_gordan(cf.l1, m, cf.l2, -m, cf.L, 0)
            )
        return total


def pz_velocity_coupling(cs: ChannelSet, ci, cf, electron: int = 1) -> float:
    """Angular factor for the velocity-gauge dipole block c_i -> c_f.

    Zero unless exactly the chosen electron's l changes by one unit.  For
    one-electron sets the channels are the l values themselves and the
    factor reduces to the m = 0 cos(theta) ladder coefficient.
    """
    if cs.two_electron:
        if electron not in (1, 2):
            raise ValueError(f"electron must be 1 or 2, got {electron}")
        return _pz_coupling_2e(ci.L, ci.l1, ci.l2, cf.L, cf.l1, cf.l2, electron)
    li, lf = ci, cf
    if abs(lf - li) != 1:
        return 0.0
    return _cos_ladder(min(li, lf), 0)


@lru_cache(maxsize=None)
def _multipole_2e(lam: int, Li: int, l1i: int, l2i: int, Lf: int, l1f: int, l2f: int) -> float:
    if Li != Lf:
        return 0.0
    total = 0.0
    for m in range(-min(l1i, l2i), min(l1i, l2i) + 1):
        cg_i = clebsch_gordan(l1i, m, l2i, -m, Li, 0)
        if cg_i == 0.0:
            continue
        for mp in range(-min(l1f, l2f), min(l1f, l2f) + 1):
            cg_f = clebsch_gordan(l1f, mp, l2f, -mp, Lf, 0)
            if cg_f == 0.0:
                continue
            mu = mp - m
            if abs(mu) > lam:
                continue
            c1 = _c_tensor_element(l1f, mp, lam, mu, l1i, m)
            if c1 == 0.0:
                continue
            c2 = _c_tensor_element(l2f, -mp, lam, -mu, l2i, -m)
            total += cg_f * cg_i * (-1) ** mu * c1 * c2
    return total


def multipole_coupling(lam: int, ci: Channel, cf: Channel) -> float:
    """<c_f | P_lambda(cos theta_12) | c_i>, diagonal in L by rotational invariance."""
    if lam < 0:
        raise ValueError(f"multipole rank must be >= 0, got {lam}")
    if lam == 0:
        return 1.0 if ci == cf else 0.0
    return _multipole_2e(lam, ci.L, ci.l1, ci.l2, cf.L, cf.l1, cf.l2)


@lru_cache(maxsize=None)
def _legendre_field_2e(lam: int, Li: int, l1i: int, l2i: int, Lf: int, l1f: int, l2f: int, electron: int) -> float:
    total = 0.0
    for m in range(-min(l1i, l2i), min(l1i, l2i) + 1):
        cg_i = clebsch_gordan(l1i, m, l2i, -m, Li, 0)
        if cg_i == 0.0:
            continue
        cg_f = clebsch_gordan(l1f, m, l2f, -m, Lf, 0)
        if cg_f == 0.0:
            continue
        if electron == 1:
            c = _c_tensor_element(l1f, m, lam, 0, l1i, m)
        else:
            c = _c_tensor_element(l2f, -m, lam, 0, l2i, -m)
        total += cg_f * cg_i * c
    return total


def legendre_field_coupling(cs: ChannelSet, lam: int, ci, cf, electron: int = 1) -> float:
    """<c_f | P_lambda(cos theta_e) | c_i> for a single-electron axial field.

    Couples different L (the field is external, not a scalar), conserves
    parity for even lambda.  One-electron sets reduce to <l'0|P_lambda|l0>.
    """
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    if cs.two_electron:
        if electron == 1 and cf.l2 != ci.l2:
            return 0.0
        if electron == 2 and cf.l1 != ci.l1:
            return 0.0
        return _legendre_field_2e(lam, ci.L, ci.l1, ci.l2, cf.L, cf.l1, cf.l2, electron)
    return _c_tensor_element(cf, 0, lam, 0, ci, 0)
