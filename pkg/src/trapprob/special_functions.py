"""Special-function kernels: log-gamma, digamma, Gauss 2F1 and Q(s, z).

Complex scalars are plain Python ``complex`` values. All functions are pure.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, DomainError, NonConvergedError, PoleError

__all__ = [
    "SeriesControl",
    "DEFAULT_CONTROL",
    "ln_gamma",
    "gamma_fn",
    "rgamma",
    "digamma",
    "gauss_2f1",
    "reg_upper_inc_gamma",
]

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_EULER_GAMMA = 0.57721566490153286061

# Bernoulli-based Stirling coefficients B_{2k} / (2k (2k-1)).
_STIRLING = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
)
# B_{2k} / (2k) for the digamma asymptotic series.
_DIGAMMA_ASY = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)

# Arguments in (0.9, 1) use the 1 - z connection formulas.
_Z_SERIES_MAX = 0.9
_Z_PFAFF_BELOW = -0.5
# Below this distance from an integer, c - a - b is treated as an integer.
_INTEGER_EPS = 1e-12
# Between _INTEGER_EPS and this, the connection formula cancels badly.
_NEAR_INTEGER_BAND = 1e-4


@dataclass(frozen=True)
class SeriesControl:
    """Truncation budget for hypergeometric series."""

    max_terms: int = 10000
    rel_tol: float = 1e-12

    def __post_init__(self) -> None:
        if int(self.max_terms) != self.max_terms or self.max_terms < 100:
            raise DomainError(f"max_terms must be an integer >= 100, got {self.max_terms}")
        if not (0.0 < self.rel_tol <= 1e-6):
            raise DomainError(f"rel_tol must lie in (0, 1e-6], got {self.rel_tol}")


DEFAULT_CONTROL = SeriesControl()


def _is_nonpos_int(z: complex) -> bool:
    return z.imag == 0.0 and z.real <= 0.0 and float(z.real).is_integer()


def _check_finite(value: complex, what: str) -> complex:
    if not (math.isfinite(value.real) and math.isfinite(value.imag)):
        raise NonConvergedError(f"{what} produced a non-finite value")
    return value


def ln_gamma(z: complex) -> complex:
    """Log-gamma on the principal branch.

    Positive reals go through ``math.lgamma``. Everything else is shifted to
    Re(z) >= 15 and evaluated with Stirling's series; the shift is undone by
    summing logarithms, which keeps the branch continuous off the negative
    real axis and gives imaginary part k*pi on it (so exp() has the right sign).
    """
    z = complex(z)
    if _is_nonpos_int(z):
        raise PoleError(f"log-gamma has a pole at {z.real:g}")
    if z.imag == 0.0 and z.real > 0.0:
        return complex(math.lgamma(z.real), 0.0)
    shift = 0j
    while z.real < 15.0:
        shift += cmath.log(z)
        z += 1.0
    inv = 1.0 / z
    inv2 = inv * inv
    corr = 0j
    power = inv
    for coef in _STIRLING:
        corr += coef * power
        power *= inv2
    value = (z - 0.5) * cmath.log(z) - z + _HALF_LOG_2PI + corr
    return value - shift


def gamma_fn(z: complex) -> complex:
    """Gamma function; raises PoleError at non-positive integers."""
    z = complex(z)
    if _is_nonpos_int(z):
        raise PoleError(f"gamma has a pole at {z.real:g}")
    if z.imag == 0.0:
        # math.gamma also covers negative non-integers, which is the
        # Gamma(x) = Gamma(x + 1) / x extension.
        return complex(math.gamma(z.real), 0.0)
    return cmath.exp(ln_gamma(z))


def rgamma(z: complex) -> complex:
    """Reciprocal gamma, entire; zero at the poles of gamma."""
    z = complex(z)
    if _is_nonpos_int(z):
        return 0j
    return cmath.exp(-ln_gamma(z))


def digamma(z: complex) -> complex:
    """Digamma function psi(z) for complex z off the poles."""
    z = complex(z)
    if _is_nonpos_int(z):
        raise PoleError(f"digamma has a pole at {z.real:g}")
    shift = 0j
    while z.real < 10.0:
        shift += 1.0 / z
        z += 1.0
    inv2 = 1.0 / (z * z)
    corr = 0j
    power = inv2
    for coef in _DIGAMMA_ASY:
        corr += coef * power
        power *= inv2
    return cmath.log(z) - 0.5 / z - corr - shift


def _gamma_ratio(num: tuple[complex, ...], den: tuple[complex, ...]) -> complex:
    """prod Gamma(num) / prod Gamma(den), zero when a denominator hits a pole."""
    if any(_is_nonpos_int(complex(d)) for d in den):
        return 0j
    log_value = sum((ln_gamma(n) for n in num), 0j) - sum((ln_gamma(d) for d in den), 0j)
    return cmath.exp(log_value)


def _cpow(base: float, expo: complex) -> complex:
    """base**expo for real base > 0 and complex exponent."""
    return cmath.exp(expo * math.log(base))


def _series(a: complex, b: complex, c: complex, z: float, control: SeriesControl) -> complex:
    """Direct summation of the hypergeometric series."""
    conj_pair = c.imag == 0.0 and b == a.conjugate()
    tol = control.rel_tol
    bound = abs(a) + abs(b) + abs(c) + 1.0
    if conj_pair:
        ar, ai2, cr = a.real, a.imag * a.imag, c.real
        term = 1.0
        total = 1.0
        for n in range(control.max_terms):
            ratio = ((ar + n) * (ar + n) + ai2) / ((cr + n) * (n + 1.0)) * z
            term *= ratio
            total += term
            if term == 0.0:
                return complex(total, 0.0)
            if n > bound:
                q = max(abs(ratio), abs(z))
                if q < 1.0 and abs(term) * q / (1.0 - q) <= tol * abs(total):
                    return _check_finite(complex(total, 0.0), "2F1 series")
            if not math.isfinite(total):
                break
        raise NonConvergedError(
            f"2F1 series did not reach rel_tol={tol:g} in {control.max_terms} terms (z={z:g})"
        )
    term_c = 1.0 + 0j
    total_c = 1.0 + 0j
    for n in range(control.max_terms):
        ratio_c = (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z
        term_c *= ratio_c
        total_c += term_c
        if term_c == 0:
            return total_c
        if n > bound:
            q = max(abs(ratio_c), abs(z))
            if q < 1.0 and abs(term_c) * q / (1.0 - q) <= tol * abs(total_c):
                return _check_finite(total_c, "2F1 series")
        if not (math.isfinite(total_c.real) and math.isfinite(total_c.imag)):
            break
    raise NonConvergedError(
        f"2F1 series did not reach rel_tol={tol:g} in {control.max_terms} terms (z={z:g})"
    )


def _polynomial(a: complex, b: complex, c: complex, z: float) -> complex:
    """Terminating series when a or b is a non-positive integer."""
    order = min(
        int(-x.real) for x in (a, b) if _is_nonpos_int(x)
    )
    if _is_nonpos_int(c) and int(-c.real) < order:
        raise PoleError("2F1 denominator parameter c hits a pole before the series terminates")
    term = 1.0 + 0j
    total = 1.0 + 0j
    for n in range(order):
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z
        total += term
    return total


def _gauss_sum(a: complex, b: complex, c: complex) -> complex:
    s = c - a - b
    if s.real <= 0.0:
        raise DivergenceError(f"2F1 at z=1 diverges: Re(c-a-b)={s.real:g} <= 0")
    return _gamma_ratio((c, s), (c - a, c - b))


def _log_case(a: complex, b: complex, m: int, w: float, control: SeriesControl) -> complex:
    """2F1(a, b; a+b+m; 1-w) for integer m >= 0 and small w > 0."""
    c = a + b + m
    finite = 0j
    if m > 0:
        coef = _gamma_ratio((c,), (a + m, b + m))
        term = 1.0 + 0j
        acc = 0j
        for k in range(m):
            if k > 0:
                term *= (a + k - 1) * (b + k - 1) / k * (-w)
            acc += term * math.factorial(m - k - 1)
        finite = coef * acc
    pref = _gamma_ratio((c,), (a, b))
    if pref == 0:
        return finite
    log_w = math.log(w)
    psi_k1 = -_EULER_GAMMA  # psi(k + 1)
    psi_km1 = digamma(m + 1.0)  # psi(k + m + 1)
    psi_a = digamma(a + m)  # psi(a + k + m)
    psi_b = digamma(b + m)
    term = 1.0 / math.factorial(m) + 0j  # (a+m)_k (b+m)_k w^k / (k! (k+m)!)
    acc = 0j
    bound = abs(a) + abs(b) + m + 1.0
    for k in range(control.max_terms):
        piece = term * (log_w - psi_k1 - psi_km1 + psi_a + psi_b)
        acc += piece
        if k > bound and abs(piece) <= control.rel_tol * abs(acc) * (1.0 - w):
            break
        term *= (a + m + k) * (b + m + k) / ((k + 1.0) * (k + m + 1.0)) * w
        psi_k1 += 1.0 / (k + 1.0)
        psi_km1 += 1.0 / (k + m + 1.0)
        psi_a += 1.0 / (a + m + k)
        psi_b += 1.0 / (b + m + k)
    else:
        raise NonConvergedError("2F1 logarithmic connection series did not converge")
    return finite - ((-w) ** m) * pref * acc


def _near_one(a: complex, b: complex, c: complex, z: float, control: SeriesControl) -> complex:
    """2F1 for 0.9 < z < 1 via the 1 - z connection formulas."""
    w = 1.0 - z
    s = c - a - b
    m = round(s.real)
    dist = abs(complex(s.real - m, s.imag))
    if dist < _INTEGER_EPS:
        if m >= 0:
            return _log_case(a, b, m, w, control)
        # Euler's transform flips the sign of c - a - b.
        return _cpow(w, s) * _scalar(c - a, c - b, c, z, control)
    if dist < _NEAR_INTEGER_BAND:
        return _series(a, b, c, z, control)
    first = _gamma_ratio((c, s), (c - a, c - b))
    second = _gamma_ratio((c, -s), (a, b))
    total = 0j
    if first != 0:
        total += first * _scalar(a, b, 1.0 - s, w, control)
    if second != 0:
        total += second * _cpow(w, s) * _scalar(c - a, c - b, 1.0 + s, w, control)
    return total


def _scalar(a: complex, b: complex, c: complex, z: float, control: SeriesControl) -> complex:
    # Canonical parameter order makes 2F1(a, b) and 2F1(b, a) bit-identical.
    if (b.real, b.imag) < (a.real, a.imag):
        a, b = b, a
    if not math.isfinite(z):
        raise DomainError(f"2F1 argument must be finite, got {z}")
    if _is_nonpos_int(a) or _is_nonpos_int(b):
        return _check_finite(_polynomial(a, b, c, z), "2F1 polynomial")
    if _is_nonpos_int(c):
        raise PoleError(f"2F1 undefined for c={c.real:g}")
    if z == 0.0:
        return 1.0 + 0j
    if z > 1.0:
        raise DivergenceError(f"2F1 series diverges for real z={z:g} > 1")
    if z == 1.0:
        return _check_finite(_gauss_sum(a, b, c), "2F1 Gauss sum")
    if z < _Z_PFAFF_BELOW:
        zt = z / (z - 1.0)
        value = _cpow(1.0 - z, -a) * _scalar(a, c - b, c, zt, control)
        return _check_finite(value, "2F1 Pfaff transform")
    if z <= _Z_SERIES_MAX:
        return _series(a, b, c, z, control)
    return _check_finite(_near_one(a, b, c, z, control), "2F1 connection formula")


def _series_vec(a: complex, b: complex, c: complex, z: np.ndarray, control: SeriesControl) -> np.ndarray:
    """Array version of ``_series`` with the same recurrence and stopping rule."""
    conj_pair = c.imag == 0.0 and b == a.conjugate()
    tol = control.rel_tol
    bound = abs(a) + abs(b) + abs(c) + 1.0
    out = np.empty(z.shape, dtype=complex)
    idx = np.arange(z.size)
    zz = z.ravel().copy()
    if conj_pair:
        ar, ai2, cr = a.real, a.imag * a.imag, c.real
        term = np.ones(zz.shape)
        total = np.ones(zz.shape)
    else:
        term = np.ones(zz.shape, dtype=complex)
        total = np.ones(zz.shape, dtype=complex)
    flat = out.reshape(-1)
    for n in range(control.max_terms):
        if conj_pair:
            ratio = ((ar + n) * (ar + n) + ai2) / ((cr + n) * (n + 1.0)) * zz
        else:
            ratio = (a + n) * (b + n) / ((c + n) * (n + 1.0)) * zz
        term = term * ratio
        total = total + term
        done = term == 0.0
        if n > bound:
            q = np.maximum(np.abs(ratio), np.abs(zz))
            with np.errstate(divide="ignore", invalid="ignore"):
                tail = np.abs(term) * q / (1.0 - q)
            done |= (q < 1.0) & (tail <= tol * np.abs(total))
        if done.any():
            flat[idx[done]] = total[done]
            keep = ~done
            idx, zz, term, total = idx[keep], zz[keep], term[keep], total[keep]
            if idx.size == 0:
                break
        if not np.all(np.isfinite(total)):
            raise NonConvergedError("2F1 series produced a non-finite value")
    else:
        raise NonConvergedError(
            f"2F1 series did not reach rel_tol={tol:g} in {control.max_terms} terms"
        )
    return out


def _vector(a: complex, b: complex, c: complex, z: np.ndarray, control: SeriesControl) -> np.ndarray:
    if (b.real, b.imag) < (a.real, a.imag):
        a, b = b, a
    if not np.all(np.isfinite(z)):
        raise DomainError("2F1 arguments must be finite")
    if z.size == 0:
        return np.empty(z.shape, dtype=complex)
    scalar_like = _is_nonpos_int(a) or _is_nonpos_int(b) or _is_nonpos_int(c)
    if scalar_like or np.any(z > 1.0):
        out = np.empty(z.shape, dtype=complex)
        for i, zi in np.ndenumerate(z):
            out[i] = _scalar(a, b, c, float(zi), control)
        return out
    out = np.ones(z.shape, dtype=complex)
    at_one = z == 1.0
    if at_one.any():
        out[at_one] = _check_finite(_gauss_sum(a, b, c), "2F1 Gauss sum")
    pfaff = z < _Z_PFAFF_BELOW
    if pfaff.any():
        zp = z[pfaff]
        inner = _vector(a, c - b, c, zp / (zp - 1.0), control)
        out[pfaff] = np.exp(-a * np.log1p(-zp)) * inner
    direct = (z >= _Z_PFAFF_BELOW) & (z <= _Z_SERIES_MAX) & (z != 0.0)
    if direct.any():
        out[direct] = _series_vec(a, b, c, z[direct], control)
    near = (z > _Z_SERIES_MAX) & (z < 1.0)
    if near.any():
        out[near] = _near_one_vec(a, b, c, z[near], control)
    if not (np.all(np.isfinite(out.real)) and np.all(np.isfinite(out.imag))):
        raise NonConvergedError("2F1 produced a non-finite value")
    return out


def _near_one_vec(a: complex, b: complex, c: complex, z: np.ndarray, control: SeriesControl) -> np.ndarray:
    s = c - a - b
    m = round(s.real)
    dist = abs(complex(s.real - m, s.imag))
    if dist < _NEAR_INTEGER_BAND:
        return np.array([_near_one(a, b, c, float(zi), control) for zi in z], dtype=complex)
    w = 1.0 - z
    first = _gamma_ratio((c, s), (c - a, c - b))
    second = _gamma_ratio((c, -s), (a, b))
    total = np.zeros(z.shape, dtype=complex)
    if first != 0:
        total += first * _vector(a, b, 1.0 - s, w, control)
    if second != 0:
        total += second * np.exp(s * np.log(w)) * _vector(c - a, c - b, 1.0 + s, w, control)
    return total


def gauss_2f1(a, b, c, z, control: SeriesControl | None = None):
    """Gauss hypergeometric function 2F1(a, b; c; z) for real z.

    Parameters may be complex. ``z`` may be a scalar or an array; scalars
    return ``complex``, arrays return a complex ndarray of the same shape.

    Regimes: z < -0.5 is mapped to z/(z-1) by Pfaff's transform,
    -0.5 <= z <= 0.9 sums the series directly, 0.9 < z < 1 uses the 1 - z
    connection formulas (with logarithmic forms when c - a - b is an integer),
    and z = 1 uses Gauss's summation theorem.
    """
    ctrl = DEFAULT_CONTROL if control is None else control
    a, b, c = complex(a), complex(b), complex(c)
    if np.ndim(z) == 0:
        return _scalar(a, b, c, float(z), ctrl)
    return _vector(a, b, c, np.asarray(z, dtype=float), ctrl)


def _inc_gamma_series(s: float, z: float, gln: float) -> float:
    """Lower regularized P(s, z) by its power series."""
    ap = s
    term = 1.0 / s
    total = term
    for _ in range(100000):
        ap += 1.0
        term *= z / ap
        total += term
        if abs(term) < abs(total) * 1e-16:
            return total * math.exp(-z + s * math.log(z) - gln)
    raise NonConvergedError(f"incomplete gamma series failed for s={s:g}, z={z:g}")


def _inc_gamma_cf(s: float, z: float, gln: float) -> float:
    """Upper regularized Q(s, z) by the modified-Lentz continued fraction."""
    tiny = 1e-300
    b = z + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 100000):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return math.exp(-z + s * math.log(z) - gln) * h
    raise NonConvergedError(f"incomplete gamma continued fraction failed for s={s:g}, z={z:g}")


def reg_upper_inc_gamma(s: float, z: float) -> float:
    """Regularized upper incomplete gamma Q(s, z) = Gamma(s, z) / Gamma(s)."""
    s = float(s)
    z = float(z)
    if not (s > 0.0) or not math.isfinite(s):
        raise DomainError(f"Q(s, z) requires s > 0, got s={s}")
    if not (z >= 0.0):
        raise DomainError(f"Q(s, z) requires z >= 0, got z={z}")
    if z == 0.0:
        return 1.0
    if math.isinf(z):
        return 0.0
    gln = math.lgamma(s)
    if z < s + 1.0:
        value = 1.0 - _inc_gamma_series(s, z, gln)
    else:
        value = _inc_gamma_cf(s, z, gln)
    return min(1.0, max(0.0, value))
