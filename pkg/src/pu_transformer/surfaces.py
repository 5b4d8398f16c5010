"""Reference surfaces: uniform area sampling and exact point-to-surface distance."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .geometry import kernels


class SurfaceError(ValueError):
    """Invalid surface parameters or spec string."""


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def _rejection(rng, n, propose, accept_prob):
    """Draw ``n`` samples from ``propose`` thinned by ``accept_prob``."""
    chunks, have = [], 0
    while have < n:
        m = max(64, 2 * (n - have))
        cand = propose(m)
        keep = rng.random(m) < accept_prob(cand)
        chunks.append(cand[keep])
        have += int(keep.sum())
    return np.concatenate(chunks)[:n]


class Surface:
    kind = ""

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def distance(self, points) -> np.ndarray:
        raise NotImplementedError

    def spec(self) -> str:
        parts = [f"{f.name}={_fmt(getattr(self, f.name))}" for f in fields(self)]
        return f"{self.kind}:{','.join(parts)}"

    def __str__(self) -> str:
        return self.spec()


@dataclass(frozen=True)
class Sphere(Surface):
    radius: float = 1.0
    cx: float = 0.0
    cy: float = 0.0
    cz: float = 0.0
    kind = "sphere"

    def __post_init__(self):
        if not self.radius > 0:
            raise SurfaceError(f"sphere radius must be positive, got {self.radius}")

    @property
    def center(self):
        return np.array([self.cx, self.cy, self.cz])

    def sample(self, n, rng):
        g = rng.standard_normal((n, 3))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return g * self.radius + self.center

    def distance(self, points):
        p = np.asarray(points, dtype=np.float64) - self.center
        return np.abs(np.linalg.norm(p, axis=1) - self.radius)


@dataclass(frozen=True)
class Torus(Surface):
    """Ring torus around the z axis: tube radius ``rho`` at distance ``R``."""

    R: float = 1.0
    rho: float = 0.4
    kind = "torus"

    def __post_init__(self):
        if not (self.R > 0 and self.rho > 0):
            raise SurfaceError(f"torus radii must be positive, got R={self.R} rho={self.rho}")

    def sample(self, n, rng):
        def propose(m):
            return np.stack([rng.uniform(0, 2 * np.pi, m), rng.uniform(0, 2 * np.pi, m)], axis=1)

        # area element is proportional to R + rho*cos(theta)
        ang = _rejection(rng, n, propose,
                         lambda a: (self.R + self.rho * np.cos(a[:, 0])) / (self.R + self.rho))
        th, ph = ang[:, 0], ang[:, 1]
        ring = self.R + self.rho * np.cos(th)
        return np.stack([ring * np.cos(ph), ring * np.sin(ph), self.rho * np.sin(th)], axis=1)

    def distance(self, points):
        p = np.asarray(points, dtype=np.float64)
        q = np.hypot(p[:, 0], p[:, 1]) - self.R
        return np.abs(np.hypot(q, p[:, 2]) - self.rho)


@dataclass(frozen=True)
class Cylinder(Surface):
    """Open cylinder (no caps) around the z axis, ``|z| <= height/2``."""

    radius: float = 1.0
    height: float = 2.0
    kind = "cylinder"

    def __post_init__(self):
        if not (self.radius > 0 and self.height > 0):
            raise SurfaceError(f"cylinder radius/height must be positive, got {self.radius}/{self.height}")

    def sample(self, n, rng):
        ph = rng.uniform(0, 2 * np.pi, n)
        z = rng.uniform(-self.height / 2, self.height / 2, n)
        return np.stack([self.radius * np.cos(ph), self.radius * np.sin(ph), z], axis=1)

    def distance(self, points):
        p = np.asarray(points, dtype=np.float64)
        radial = np.hypot(p[:, 0], p[:, 1]) - self.radius
        axial = np.maximum(np.abs(p[:, 2]) - self.height / 2, 0.0)
        return np.hypot(radial, axial)


@dataclass(frozen=True)
class Bump(Surface):
    """Height field ``z = amplitude * sin(freq*x) * sin(freq*y)`` on ``[-extent, extent]^2``."""

    amplitude: float = 0.2
    freq: float = 3.0
    extent: float = 1.0
    kind = "bump"

    def __post_init__(self):
        if not (self.amplitude > 0 and self.freq > 0 and self.extent > 0):
            raise SurfaceError(f"bump parameters must be positive: {self}")

    def _eval(self, u, v):
        a, f = self.amplitude, self.freq
        su, cu, sv, cv = np.sin(f * u), np.cos(f * u), np.sin(f * v), np.cos(f * v)
        z = a * su * sv
        zu = a * f * cu * sv
        zv = a * f * su * cv
        return z, zu, zv

    def sample(self, n, rng):
        e = self.extent
        slope = self.amplitude * self.freq
        bound = math.sqrt(1.0 + 2.0 * slope * slope)

        def propose(m):
            return rng.uniform(-e, e, (m, 2))

        def accept(uv):
            _, zu, zv = self._eval(uv[:, 0], uv[:, 1])
            return np.sqrt(1.0 + zu * zu + zv * zv) / bound

        uv = _rejection(rng, n, propose, accept)
        z, _, _ = self._eval(uv[:, 0], uv[:, 1])
        return np.stack([uv[:, 0], uv[:, 1], z], axis=1)

    def _curvature(self, u, v):
        a, f = self.amplitude, self.freq
        z = a * np.sin(f * u) * np.sin(f * v)
        # z_uu == z_vv == -f^2 z
        return -f * f * z, a * f * f * np.cos(f * u) * np.cos(f * v)

    def _sq_dist(self, u, v, p):
        z, _, _ = self._eval(u, v)
        return (u - p[:, 0]) ** 2 + (v - p[:, 1]) ** 2 + (z - p[:, 2]) ** 2

    def _refine_interior(self, u, v, p, iters):
        """Damped Newton on the unconstrained sheet; falls back to Gauss-Newton off convex regions."""
        best = self._sq_dist(u, v, p)
        lam = np.full(len(p), 1e-9)
        for _ in range(iters):
            z, zu, zv = self._eval(u, v)
            zuu, zuv = self._curvature(u, v)
            r0, r1, r2 = u - p[:, 0], v - p[:, 1], z - p[:, 2]
            h11 = 1.0 + zu * zu + r2 * zuu
            h22 = 1.0 + zv * zv + r2 * zuu
            h12 = zu * zv + r2 * zuv
            indefinite = (h11 <= 0) | (h11 * h22 - h12 * h12 <= 0)
            h11 = np.where(indefinite, 1.0 + zu * zu, h11) + lam
            h22 = np.where(indefinite, 1.0 + zv * zv, h22) + lam
            h12 = np.where(indefinite, zu * zv, h12)
            b1, b2 = -(r0 + zu * r2), -(r1 + zv * r2)
            det = h11 * h22 - h12 * h12
            un = u + (h22 * b1 - h12 * b2) / det
            vn = v + (h11 * b2 - h12 * b1) / det
            cand = self._sq_dist(un, vn, p)
            ok = cand <= best
            u, v = np.where(ok, un, u), np.where(ok, vn, v)
            best = np.where(ok, cand, best)
            lam = np.where(ok, lam * 0.1, lam * 10.0)
        return u, v, best

    def _refine_edge(self, t, fixed, along_u, p, iters):
        """Damped 1-D Newton along the edge where one coordinate is held at ``fixed``."""
        e = self.extent

        def uv(t):
            return (t, np.full_like(t, fixed)) if along_u else (np.full_like(t, fixed), t)

        best = self._sq_dist(*uv(t), p)
        lam = np.full(len(p), 1e-9)
        for _ in range(iters):
            u, v = uv(t)
            z, zu, zv = self._eval(u, v)
            zuu, _ = self._curvature(u, v)
            zt = zu if along_u else zv
            r2 = z - p[:, 2]
            g = (t - p[:, 0 if along_u else 1]) + zt * r2
            h = 1.0 + zt * zt + r2 * zuu
            h = np.where(h > 0, h, 1.0 + zt * zt) + lam
            tn = np.clip(t - g / h, -e, e)
            cand = self._sq_dist(*uv(tn), p)
            ok = cand <= best
            t = np.where(ok, tn, t)
            best = np.where(ok, cand, best)
            lam = np.where(ok, lam * 0.1, lam * 10.0)
        return best

    def distance(self, points, grid: int = 128, iters: int = 60, seeds: int = 4):
        """Closest-point distance on the bounded sheet.

        The minimum is either an interior critical point or lies on the
        boundary.  Interior candidates come from Newton refinement of the
        ``seeds`` nearest grid nodes (discarded if they leave the patch);
        boundary candidates from 1-D refinement along each of the four edges.
        """
        q = np.asarray(points, dtype=np.float64)
        e = self.extent
        g = np.linspace(-e, e, grid)
        gu, gv = np.meshgrid(g, g, indexing="ij")
        gu, gv = gu.ravel(), gv.ravel()
        gz, _, _ = self._eval(gu, gv)
        seeds = min(seeds, len(gu))
        arg = kernels.knn_query(q, np.stack([gu, gv, gz], axis=1), seeds, False).ravel()
        p = np.repeat(q, seeds, axis=0)
        u, v, best = self._refine_interior(gu[arg], gv[arg], p, iters)
        inside = (np.abs(u) <= e) & (np.abs(v) <= e)
        best = np.where(inside, best, np.inf).reshape(len(q), seeds).min(axis=1)
        for fixed in (-e, e):
            for along_u in (True, False):
                gu, gv = (g, np.full_like(g, fixed)) if along_u else (np.full_like(g, fixed), g)
                gz, _, _ = self._eval(gu, gv)
                _, arg = kernels.nearest(q, np.stack([gu, gv, gz], axis=1))
                best = np.minimum(best, self._refine_edge(g[arg], fixed, along_u, q, iters))
        return np.sqrt(best)


@dataclass(frozen=True, eq=False)
class TriangleMesh(Surface):
    vertices: np.ndarray
    faces: np.ndarray
    path: str = ""
    kind = "mesh"

    def __post_init__(self):
        V = np.asarray(self.vertices, dtype=np.float64)
        Fc = np.asarray(self.faces, dtype=np.int64)
        if V.ndim != 2 or V.shape[1] != 3 or Fc.ndim != 2 or Fc.shape[1] != 3 or len(Fc) == 0:
            raise SurfaceError("mesh needs (M, 3) vertices and non-empty (T, 3) faces")
        if Fc.min() < 0 or Fc.max() >= len(V):
            raise SurfaceError("mesh face index out of range")
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "faces", Fc)
        if (self.areas() <= 1e-12).any():
            raise SurfaceError("mesh has degenerate triangles (area <= 1e-12)")

    def spec(self) -> str:
        if not self.path:
            raise SurfaceError("in-memory mesh has no spec string; save it as OBJ first")
        return f"mesh:path={self.path}"

    def _corners(self):
        V, Fc = self.vertices, self.faces
        return V[Fc[:, 0]], V[Fc[:, 1]], V[Fc[:, 2]]

    def areas(self) -> np.ndarray:
        a, b, c = self._corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def sample(self, n, rng):
        w = self.areas()
        tri = rng.choice(len(w), size=n, p=w / w.sum())
        s = np.sqrt(rng.random(n))
        t = rng.random(n)
        a, b, c = (x[tri] for x in self._corners())
        return (1 - s)[:, None] * a + (s * (1 - t))[:, None] * b + (s * t)[:, None] * c

    def distance(self, points):
        p = np.asarray(points, dtype=np.float64)
        a, b, c = self._corners()
        out = np.empty(len(p))
        step = max(1, (1 << 21) // len(a))
        for lo in range(0, len(p), step):
            q = closest_point_on_triangles(p[lo:lo + step, None, :], a[None], b[None], c[None])
            d = q - p[lo:lo + step, None, :]
            out[lo:lo + step] = np.sqrt((d * d).sum(-1).min(axis=1))
        return out


def closest_point_on_triangles(p, a, b, c):
    """Closest point of triangle(s) ``abc`` to ``p`` (broadcasting, Voronoi-region walk)."""
    def dot(x, y):
        return (x * y).sum(-1)

    ab, ac, ap = b - a, c - a, p - a
    d1, d2 = dot(ab, ap), dot(ac, ap)
    bp = p - b
    d3, d4 = dot(ab, bp), dot(ac, bp)
    cp = p - c
    d5, d6 = dot(ab, cp), dot(ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v_in = vb / denom
        w_in = vc / denom
        res = a + v_in[..., None] * ab + w_in[..., None] * ac

        t_ab = d1 / (d1 - d3)
        e_ab = a + t_ab[..., None] * ab
        t_ac = d2 / (d2 - d6)
        e_ac = a + t_ac[..., None] * ac
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        e_bc = b + t_bc[..., None] * (c - b)

    # later assignments take priority, mirroring the early returns of the scalar walk
    res = np.where(((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0))[..., None], e_bc, res)
    res = np.where(((vb <= 0) & (d2 >= 0) & (d6 <= 0))[..., None], e_ac, res)
    res = np.where(((d6 >= 0) & (d5 <= d6))[..., None], np.broadcast_to(c, res.shape), res)
    res = np.where(((vc <= 0) & (d1 >= 0) & (d3 <= 0))[..., None], e_ab, res)
    res = np.where(((d3 >= 0) & (d4 <= d3))[..., None], np.broadcast_to(b, res.shape), res)
    res = np.where(((d1 <= 0) & (d2 <= 0))[..., None], np.broadcast_to(a, res.shape), res)
    return res


def read_obj(path) -> TriangleMesh:
    """Minimal OBJ reader: ``v`` and ``f`` records, polygons fan-triangulated."""
    verts, faces = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            tok = line.split()
            if not tok or tok[0].startswith("#"):
                continue
            if tok[0] == "v":
                try:
                    verts.append([float(x) for x in tok[1:4]])
                except ValueError:
                    raise SurfaceError(f"{path}:{lineno}: bad vertex") from None
            elif tok[0] == "f":
                ids = []
                for t in tok[1:]:
                    i = int(t.split("/")[0])
                    ids.append(i - 1 if i > 0 else len(verts) + i)
                for j in range(1, len(ids) - 1):
                    faces.append([ids[0], ids[j], ids[j + 1]])
    return TriangleMesh(np.array(verts), np.array(faces), path=str(path))


_KINDS = {cls.kind: cls for cls in (Sphere, Torus, Cylinder, Bump)}
DEFAULT_ZOO = ("sphere", "torus", "cylinder", "bump")


def parse_surface(spec: str) -> Surface:
    """Parse ``kind[:key=value,...]``, e.g. ``torus:R=1,rho=0.4`` or ``mesh:path=a.obj``."""
    kind, _, rest = spec.strip().partition(":")
    kw = {}
    if rest:
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            if not eq:
                raise SurfaceError(f"bad surface parameter {item!r} in {spec!r}")
            kw[key.strip()] = val.strip()
    if kind == "mesh":
        if "path" not in kw:
            raise SurfaceError("mesh spec needs path=<file.obj>")
        return read_obj(Path(kw["path"]))
    if kind not in _KINDS:
        raise SurfaceError(f"unknown surface kind {kind!r}; expected one of {sorted(_KINDS) + ['mesh']}")
    cls = _KINDS[kind]
    names = {f.name for f in fields(cls)}
    unknown = set(kw) - names
    if unknown:
        raise SurfaceError(f"unknown {kind} parameters {sorted(unknown)}")
    try:
        return cls(**{k: float(v) for k, v in kw.items()})
    except ValueError as exc:
        raise SurfaceError(str(exc)) from None
