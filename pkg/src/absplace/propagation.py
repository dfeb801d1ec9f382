"""Channel-gain prediction from radio maps and capacity-matrix construction.

Gains are in dB, powers in dBm, rates in bits/s.
"""

import math
from dataclasses import dataclass

import numpy as np

from .geometry import SpatialLossField

SPEED_OF_LIGHT = 299_792_458.0

MODELS = ("tomographic", "free_space", "alhourani", "ingested")


class GainMapParseError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class PropagationDomainError(ValueError):
    pass


@dataclass(frozen=True)
class RadioParams:
    bandwidth_hz: float = 20e6
    tx_power_dbm: float = 20.0
    noise_interf_dbm: float = -96.0
    carrier_hz: float = 2.4e9

    def __post_init__(self):
        if not self.bandwidth_hz > 0:
            raise ValueError("bandwidth must be positive")
        if not self.carrier_hz > 0:
            raise ValueError("carrier frequency must be positive")

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.carrier_hz


@dataclass(frozen=True)
class AlHouraniParams:
    a: float = 12.08
    b: float = 0.11
    eta_los_db: float = 2.3
    eta_nlos_db: float = 34.0

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("b must be positive")


@dataclass
class GainMap:
    """Dense ``M x G`` gain matrix in dB."""

    matrix: np.ndarray
    provenance: str = "ingested"

    def __post_init__(self):
        self.matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if self.matrix.ndim != 2:
            raise ValueError("gain map must be a 2D matrix")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("gain map entries must be finite")
        if self.provenance not in MODELS:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @property
    def shape(self):
        return self.matrix.shape


# ---------------------------------------------------------------- tomography

def tomographic_integral(x1, x2, slf, return_crossings=False):
    """Shadowing between two points: SLF line integral divided by sqrt(length).

    Walks the voxel boundaries crossed by the segment one at a time, so the
    cost is proportional to the number of crossings. Voxel indices are
    clamped when reading the SLF; border voxels extend to infinity.
    """
    grid = slf.grid
    L = slf.tensor
    dims = grid.dims
    delta = grid.spacing
    o = grid.origin
    p1 = [float(x1[j]) - o[j] for j in range(3)]
    p2 = [float(x2[j]) - o[j] for j in range(3)]
    diff = [p2[j] - p1[j] for j in range(3)]
    length = math.sqrt(diff[0] ** 2 + diff[1] ** 2 + diff[2] ** 2)
    if length == 0.0:
        return (0.0, 0) if return_crossings else 0.0

    inc = [(d > 0) - (d < 0) for d in diff]
    denom = [d if d != 0 else 1.0 for d in diff]
    axes = [j for j in range(3) if inc[j] != 0]
    cur = [math.floor(p1[j] / delta[j] + 0.5) for j in range(3)]

    total = 0.0
    t = 0.0
    crossings = 0
    while t < 1.0:
        j_next = axes[0]
        t_cand = (delta[j_next] * (cur[j_next] + inc[j_next] / 2) - p1[j_next]) / denom[j_next]
        for j in axes[1:]:
            tj = (delta[j] * (cur[j] + inc[j] / 2) - p1[j]) / denom[j]
            if tj < t_cand:
                j_next, t_cand = j, tj
        t_next = min(1.0, t_cand)
        i, k, m = (min(max(cur[j], 0), dims[j] - 1) for j in range(3))
        total += (t_next - t) * L[i, k, m]
        t = t_next
        cur[j_next] += inc[j_next]
        crossings += 1
    value = math.sqrt(length) * total
    return (value, crossings - 1) if return_crossings else value


def tomographic_integrals(x1, x2, slf, chunk=4096):
    """Vectorized shadowing for many segments at once.

    Equivalent to :func:`tomographic_integral`, but gathers the boundary
    crossings of all three axes, sorts them, and reads the SLF at the
    midpoint of every sub-segment. ``x1`` and ``x2`` broadcast to ``(S, 3)``.
    """
    x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
    x1 = x1.reshape(-1, 3)
    x2 = x2.reshape(-1, 3)
    out = np.empty(len(x1))
    for s in range(0, len(x1), chunk):
        out[s:s + chunk] = _integrals_chunk(x1[s:s + chunk], x2[s:s + chunk], slf)
    return out


def _integrals_chunk(x1, x2, slf):
    grid = slf.grid
    origin = np.asarray(grid.origin)
    delta = np.asarray(grid.spacing)
    dims = np.asarray(grid.dims)
    p1 = (x1 - origin) / delta  # voxel units: centers at integers
    p2 = (x2 - origin) / delta
    d = p2 - p1
    ts = [np.zeros((len(p1), 1)), np.ones((len(p1), 1))]
    for j in range(3):
        lo = np.minimum(p1[:, j], p2[:, j])
        hi = np.maximum(p1[:, j], p2[:, j])
        first = np.ceil(lo - 0.5)  # boundaries sit at k + 1/2
        count = np.maximum(np.floor(hi - 0.5) - first + 1, 0).astype(int)
        kmax = int(count.max()) if len(count) else 0
        if kmax == 0:
            continue
        b = first[:, None] + 0.5 + np.arange(kmax)[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            tj = (b - p1[:, j:j + 1]) / d[:, j:j + 1]
        valid = np.arange(kmax)[None, :] < count[:, None]
        tj = np.where(valid & np.isfinite(tj), np.clip(tj, 0.0, 1.0), 1.0)
        ts.append(tj)
    t = np.sort(np.concatenate(ts, axis=1), axis=1)
    dt = np.diff(t, axis=1)
    tm = 0.5 * (t[:, 1:] + t[:, :-1])
    pts = p1[:, None, :] + tm[..., None] * d[:, None, :]
    idx = np.floor(pts + 0.5).astype(int)
    idx = np.clip(idx, 0, dims - 1)
    vals = slf.tensor[idx[..., 0], idx[..., 1], idx[..., 2]]
    length = np.linalg.norm(x2 - x1, axis=1)
    return np.sqrt(length) * np.sum(dt * vals, axis=1)


# ---------------------------------------------------------------- gain models

def free_space_db(distance, lambda_m):
    return 20.0 * np.log10(lambda_m / (4.0 * np.pi * distance))


def _distance(gt, abs_pos):
    d = np.linalg.norm(np.asarray(abs_pos, dtype=float) - np.asarray(gt, dtype=float), axis=-1)
    if np.any(d == 0):
        raise PropagationDomainError("GT and ABS positions coincide")
    return d


def gain_free_space(gt, abs_pos, lambda_m):
    return free_space_db(_distance(gt, abs_pos), lambda_m)


def gain_tomographic(gt, abs_pos, slf, lambda_m):
    d = _distance(gt, abs_pos)
    return free_space_db(d, lambda_m) - tomographic_integral(gt, abs_pos, slf)


def los_probability(elevation_deg, params):
    return 1.0 / (1.0 + params.a * np.exp(-params.b * (elevation_deg - params.a)))


def gain_alhourani(gt, abs_pos, params, lambda_m):
    """Mean air-to-ground gain of the LoS/NLoS elevation-angle model."""
    gt = np.asarray(gt, dtype=float)
    abs_pos = np.asarray(abs_pos, dtype=float)
    d = _distance(gt, abs_pos)
    dz = abs_pos[..., 2] - gt[..., 2]
    if np.any(dz <= 0):
        raise PropagationDomainError("ABS must be strictly above the GT")
    theta = np.degrees(np.arcsin(np.clip(dz / d, -1.0, 1.0)))
    p_los = los_probability(theta, params)
    excess = p_los * params.eta_los_db + (1.0 - p_los) * params.eta_nlos_db
    return free_space_db(d, lambda_m) - excess


def dbm_to_mw(dbm):
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0)


def capacity(gain_db, params):
    """Shannon rate W log2(1 + P_TX g / sigma^2)."""
    snr = dbm_to_mw(params.tx_power_dbm) * 10.0 ** (np.asarray(gain_db, dtype=float) / 10.0)
    snr = snr / dbm_to_mw(params.noise_interf_dbm)
    return params.bandwidth_hz * np.log2(1.0 + snr)


# ---------------------------------------------------------------- matrices

def gain_matrix(gts, flight_grid, model, params, slf=None, alhourani=None, gain_map=None):
    """``M x G`` matrix of gains (dB) between GTs and flight-grid points.

    ``model`` is one of ``tomographic``, ``free_space``, ``alhourani`` or
    ``ingested`` (the latter just validates and returns ``gain_map``).
    """
    if model == "ingested":
        if gain_map is None:
            raise ValueError("ingested model needs a gain map")
        G = gain_map.matrix if isinstance(gain_map, GainMap) else np.asarray(gain_map, float)
        return np.array(G, dtype=float)

    gts = np.atleast_2d(np.asarray(gts, dtype=float))
    grid = np.atleast_2d(np.asarray(flight_grid, dtype=float))
    if len(gts) == 0 or len(grid) == 0:
        raise ValueError("GT and flight-grid lists must be nonempty")
    A = np.broadcast_to(gts[:, None, :], (len(gts), len(grid), 3))
    B = np.broadcast_to(grid[None, :, :], (len(gts), len(grid), 3))
    lam = params.wavelength
    d = np.linalg.norm(B - A, axis=-1)
    bad = np.argwhere(d == 0)
    if len(bad):
        m, g = bad[0]
        raise PropagationDomainError(f"GT {m} coincides with grid point {g}")
    if model == "free_space":
        return free_space_db(d, lam)
    if model == "tomographic":
        if slf is None:
            raise ValueError("tomographic model needs a spatial loss field")
        xi = tomographic_integrals(A.reshape(-1, 3), B.reshape(-1, 3), slf).reshape(d.shape)
        return free_space_db(d, lam) - xi
    if model == "alhourani":
        dz = B[..., 2] - A[..., 2]
        bad = np.argwhere(dz <= 0)
        if len(bad):
            m, g = bad[0]
            raise PropagationDomainError(f"grid point {g} is not above GT {m}")
        return gain_alhourani(A, B, alhourani or AlHouraniParams(), lam)
    raise ValueError(f"unknown channel model {model!r}")


def build_capacity_matrix(gts, flight_grid, model, params, **kwargs):
    """Capacity matrix ``C[m, g]`` in bits/s; see :func:`gain_matrix`."""
    C = capacity(gain_matrix(gts, flight_grid, model, params, **kwargs), params)
    if not np.all(np.isfinite(C)):
        m, g = np.argwhere(~np.isfinite(C))[0]
        raise PropagationDomainError(f"non-finite capacity at (m={m}, g={g})")
    return C


def backhaul_vector(num_points, spec, params=None):
    """Backhaul capacities for ``num_points`` flight-grid points.

    ``spec`` is either a number (a common rate in bits/s) or a mapping with
    key ``constant`` or ``gain_db`` (scalar or length-G gains). Gains are
    turned into capacities with ``params``.
    """
    if isinstance(spec, (int, float, np.floating, np.integer)):
        spec = {"constant": float(spec)}
    if "constant" in spec:
        c = float(spec["constant"])
        if c < 0:
            raise ValueError("backhaul capacity must be non-negative")
        return np.full(num_points, c)
    if "gain_db" in spec:
        if params is None:
            raise ValueError("gain-based backhaul needs radio parameters")
        gains = np.broadcast_to(np.asarray(spec["gain_db"], dtype=float), (num_points,))
        return capacity(gains, params)
    raise ValueError(f"unrecognized backhaul spec {spec!r}")


# ---------------------------------------------------------------- file format

def save_gain_map(gain_map, path):
    """Plain text: ``M G`` header, then M rows of G dB values (17 digits)."""
    G = gain_map.matrix if isinstance(gain_map, GainMap) else np.atleast_2d(gain_map)
    with open(path, "w") as fh:
        fh.write(f"{G.shape[0]} {G.shape[1]}\n")
        for row in G:
            fh.write(" ".join(format(float(v), ".17g") for v in row))
            fh.write("\n")


def load_gain_map(path, provenance="ingested"):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise GainMapParseError("empty file", 1)
    header = lines[0].split()
    try:
        if len(header) != 2:
            raise ValueError
        M, G = (int(v) for v in header)
        if M < 1 or G < 1:
            raise ValueError
    except ValueError:
        raise GainMapParseError(f"malformed header {lines[0]!r}, expected 'M G'", 1) from None
    body = [(i + 2, ln) for i, ln in enumerate(lines[1:]) if ln.strip()]
    if len(body) != M:
        raise GainMapParseError(f"expected {M} rows, found {len(body)}", len(lines))
    matrix = np.empty((M, G))
    for r, (lineno, ln) in enumerate(body):
        fields = ln.split()
        if len(fields) != G:
            raise GainMapParseError(f"expected {G} values, found {len(fields)}", lineno)
        try:
            row = [float(v) for v in fields]
        except ValueError as exc:
            raise GainMapParseError(str(exc), lineno) from None
        if not all(math.isfinite(v) for v in row):
            raise GainMapParseError("non-finite entry", lineno)
        matrix[r] = row
    return GainMap(matrix, provenance)
