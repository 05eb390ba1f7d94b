"""Impulse-based rigid-body settling with convex-hull collision proxies.

All bodies in a state share one proxy shape (identical objects). Contacts are
generated at hull vertices and edge midpoints against the partner hull's face
planes, plus an inner-sphere fallback for deep coaxial overlaps. The solver is
sequential impulses with Baumgarte positional bias, zero restitution, and
Coulomb friction. Stepping is fully deterministic: fixed iteration order, no
threaded accumulation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.spatial import ConvexHull

from ..geom import TriMesh, quat_to_matrix
from .container import ContainerSpec

# support directions for proxy decimation: axes, edge diagonals, corners
_DECIMATION_DIRS = None


def _decimation_dirs() -> np.ndarray:
    global _DECIMATION_DIRS
    if _DECIMATION_DIRS is None:
        dirs = []
        for k in range(3):
            for s in (-1.0, 1.0):
                d = np.zeros(3)
                d[k] = s
                dirs.append(d)
        for i in range(3):
            for j in range(i + 1, 3):
                for si in (-1.0, 1.0):
                    for sj in (-1.0, 1.0):
                        d = np.zeros(3)
                        d[i] = si
                        d[j] = sj
                        dirs.append(d / np.sqrt(2))
        for sx in (-1.0, 1.0):
            for sy in (-1.0, 1.0):
                for sz in (-1.0, 1.0):
                    dirs.append(np.array([sx, sy, sz]) / np.sqrt(3))
        _DECIMATION_DIRS = np.asarray(dirs)
    return _DECIMATION_DIRS


@dataclass(frozen=True)
class SimParams:
    """Fixed-step simulation parameters. Restitution is pinned at zero."""

    timestep: float = 1.0 / 240.0
    max_steps: int = 12000
    friction: float = 0.5
    restitution: float = 0.0
    sleep_lin_vel: float = 1e-3
    sleep_ang_vel: float = 1e-2
    gravity: float = 9.81
    batch_grid: tuple = (4, 4, 5)
    solver_iters: int = 12
    slop: float = 2e-4
    baumgarte: float = 0.2

    def __post_init__(self):
        if not 0 < self.timestep <= 1.0 / 60.0:
            raise ValueError(f"timestep {self.timestep} outside (0, 1/60]")
        if self.restitution != 0.0:
            raise ValueError("restitution must be 0")

    def to_dict(self) -> dict:
        return {
            "timestep": self.timestep,
            "max_steps": self.max_steps,
            "friction": self.friction,
            "restitution": self.restitution,
            "sleep_lin_vel": self.sleep_lin_vel,
            "sleep_ang_vel": self.sleep_ang_vel,
            "gravity": self.gravity,
            "batch_grid": list(self.batch_grid),
        }


@dataclass
class ProxyShape:
    """Convex collision proxy with mass properties (uniform density)."""

    verts: np.ndarray  # (V, 3) hull vertices relative to COM
    face_n: np.ndarray  # (F, 3) outward unit normals
    face_d: np.ndarray  # (F,) plane offsets, n . x = d on the face
    probes: np.ndarray  # (P, 3) contact probe points (verts + edge midpoints)
    com_template: np.ndarray  # COM in the template frame
    mass: float
    inv_mass: float
    inertia_inv: np.ndarray  # (3, 3) inverse inertia in the COM frame
    r_bound: float
    r_inner: float


def _hull_mass_properties(verts: np.ndarray, faces: np.ndarray, density: float):
    """Mass, COM, inertia about COM for a closed outward-oriented hull."""
    a = verts[faces[:, 0]]
    b = verts[faces[:, 1]]
    c = verts[faces[:, 2]]
    vols = np.einsum("ij,ij->i", a, np.cross(b, c)) / 6.0
    volume = vols.sum()
    com = (vols[:, None] * (a + b + c) / 4.0).sum(axis=0) / volume
    # covariance integral per signed tetrahedron (0, a, b, c)
    s = a + b + c
    cov = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            cov[i, j] = (
                vols
                * (s[:, i] * s[:, j] + a[:, i] * a[:, j] + b[:, i] * b[:, j] + c[:, i] * c[:, j])
                / 20.0
            ).sum()
    mass = density * volume
    cov *= density
    inertia = np.trace(cov) * np.eye(3) - cov
    d = com
    inertia -= mass * (np.dot(d, d) * np.eye(3) - np.outer(d, d))
    return mass, com, inertia


def build_proxy(mesh: TriMesh, max_verts: int = 32, density: float = 1000.0) -> ProxyShape:
    """Convex hull proxy of the mesh, decimated by support sampling when large."""
    hull = ConvexHull(mesh.vertices)
    hv = mesh.vertices[hull.vertices]
    if len(hv) > max_verts:
        dirs = _decimation_dirs()
        support = np.unique(np.argmax(dirs @ hv.T, axis=1))
        hv = hv[support]
        hull2 = ConvexHull(hv)
        hv = hv[hull2.vertices]
        hull = ConvexHull(hv)
        verts_all = hv
    else:
        verts_all = hv
        hull = ConvexHull(verts_all)

    simplices = hull.simplices.copy()
    eqs = hull.equations
    corners = verts_all[simplices]
    n = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    flip = np.einsum("ij,ij->i", n, eqs[:, :3]) < 0
    simplices[flip] = simplices[flip][:, [0, 2, 1]]

    mass, com, inertia = _hull_mass_properties(verts_all, simplices, density)
    verts = verts_all - com

    # deduplicated face planes relative to COM
    normals = eqs[:, :3]
    offsets = -eqs[:, 3] - normals @ com
    key = np.round(np.column_stack([normals, offsets]), 9)
    _, keep = np.unique(key, axis=0, return_index=True)
    face_n = np.ascontiguousarray(normals[sorted(keep)])
    face_d = np.ascontiguousarray(offsets[sorted(keep)])

    # edge midpoints catch edge-into-face penetration that vertex probes miss;
    # skipped for finer proxies where vertex coverage is already dense
    probes = verts
    if len(verts) <= 16:
        edges = set()
        for tri in simplices:
            for u, v in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                edges.add((u, v) if u < v else (v, u))
        mids = np.array([(verts_all[u] + verts_all[v]) / 2.0 - com for u, v in sorted(edges)])
        probes = np.vstack([verts, mids])

    return ProxyShape(
        verts=np.ascontiguousarray(verts),
        face_n=face_n,
        face_d=face_d,
        probes=np.ascontiguousarray(probes),
        com_template=com,
        mass=float(mass),
        inv_mass=float(1.0 / mass),
        inertia_inv=np.linalg.inv(inertia),
        r_bound=float(np.linalg.norm(verts, axis=1).max()),
        r_inner=float(face_d.min()),
    )


def container_planes(spec: ContainerSpec | None):
    """Static halfspace constraints (n, d): bodies are kept where n . x >= d.

    Walls extend to infinite height; the floor is always present.
    """
    if spec is None or not spec.has_container:
        normals = np.array([[0.0, 0.0, 1.0]])
        offsets = np.array([0.0])
        return normals, offsets
    cav = spec.cavity_aabb
    normals = np.array(
        [
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
        ]
    )
    offsets = np.array([cav.min[2], cav.min[0], -cav.max[0], cav.min[1], -cav.max[1]])
    return normals, offsets


@dataclass
class SimState:
    proxy: ProxyShape
    container: ContainerSpec | None
    plane_n: np.ndarray
    plane_d: np.ndarray
    pos: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    quat: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    vel: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    omega: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    asleep: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    sleep_count: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @staticmethod
    def create(template: TriMesh, container: ContainerSpec | None,
               max_proxy_verts: int = 32) -> "SimState":
        proxy = build_proxy(template, max_verts=max_proxy_verts)
        pn, pd = container_planes(container)
        return SimState(proxy=proxy, container=container, plane_n=pn, plane_d=pd)

    @property
    def n_bodies(self) -> int:
        return len(self.pos)

    def add_bodies(self, poses):
        """Append bodies given template-frame poses (at rest, awake)."""
        if not poses:
            return
        rot = np.stack([quat_to_matrix(p.rotation) for p in poses])
        com_w = np.einsum("nij,j->ni", rot, self.proxy.com_template)
        new_pos = np.stack([p.translation for p in poses]) + com_w
        new_quat = np.stack([p.rotation for p in poses])
        n = len(poses)
        self.pos = np.vstack([self.pos, new_pos])
        self.quat = np.vstack([self.quat, new_quat])
        self.vel = np.vstack([self.vel, np.zeros((n, 3))])
        self.omega = np.vstack([self.omega, np.zeros((n, 3))])
        self.asleep = np.concatenate([self.asleep, np.zeros(n, dtype=np.int64)])
        self.sleep_count = np.concatenate([self.sleep_count, np.zeros(n, dtype=np.int64)])

    def template_poses(self):
        """Template-frame (quat, translation) arrays for the current state."""
        from ..geom import RigidPose

        out = []
        for i in range(self.n_bodies):
            r = quat_to_matrix(self.quat[i])
            t = self.pos[i] - r @ self.proxy.com_template
            q = self.quat[i] / np.linalg.norm(self.quat[i])
            out.append(RigidPose(q, t))
        return out

    def remove_bodies(self, mask):
        keep = ~np.asarray(mask, dtype=bool)
        self.pos = self.pos[keep]
        self.quat = self.quat[keep]
        self.vel = self.vel[keep]
        self.omega = self.omega[keep]
        self.asleep = self.asleep[keep]
        self.sleep_count = self.sleep_count[keep]

    def body_aabbs(self):
        """(N, 3) mins and maxs over the proxy hull vertices."""
        n = self.n_bodies
        lo = np.empty((n, 3))
        hi = np.empty((n, 3))
        for i in range(n):
            w = self.proxy.verts @ quat_to_matrix(self.quat[i]).T + self.pos[i]
            lo[i] = w.min(axis=0)
            hi[i] = w.max(axis=0)
        return lo, hi


class SimulationUnstable(RuntimeError):
    """The integrator produced a non-finite or escaped body state."""


@dataclass
class SettleResult:
    steps: int
    converged: bool


def settle(state: SimState, batch, params: SimParams, rng=None) -> SettleResult:
    """Add a batch of template-frame poses and run until every body sleeps.

    Deterministic given the state and parameters; `rng` is accepted for
    interface symmetry with the spawners but is not consumed here.
    """
    state.add_bodies(list(batch) if batch else [])
    if state.n_bodies == 0:
        return SettleResult(steps=0, converged=True)
    sleep_steps = max(1, int(round(0.25 / params.timestep)))
    steps = _run_sim(
        state.pos, state.quat, state.vel, state.omega, state.asleep, state.sleep_count,
        state.proxy.probes, len(state.proxy.verts), state.proxy.face_n, state.proxy.face_d,
        state.proxy.inv_mass, state.proxy.inertia_inv,
        state.proxy.r_bound, state.proxy.r_inner,
        state.plane_n, state.plane_d,
        params.timestep, params.friction, params.baumgarte, params.slop,
        params.gravity, params.sleep_lin_vel, params.sleep_ang_vel,
        sleep_steps, params.solver_iters, params.max_steps,
    )
    if steps < 0:
        raise SimulationUnstable(
            f"simulation state blew up after {-int(steps)} steps with {state.n_bodies} bodies"
        )
    converged = bool(state.asleep.all())
    return SettleResult(steps=int(steps), converged=converged)


def overflow_check(state: SimState, clearance: float = 0.0) -> bool:
    """True iff any body AABB intersects the sentinel box on the container's open top."""
    if state.container is None or not state.container.has_container:
        return False
    if state.n_bodies == 0:
        return False
    cav = state.container.cavity_aabb
    rim = cav.max[2] + clearance
    lo, hi = state.body_aabbs()
    above = hi[:, 2] > rim
    in_x = (hi[:, 0] > cav.min[0]) & (lo[:, 0] < cav.max[0])
    in_y = (hi[:, 1] > cav.min[1]) & (lo[:, 1] < cav.max[1])
    return bool(np.any(above & in_x & in_y))


def max_pair_penetration(state: SimState) -> float:
    """Deepest probe-in-hull penetration over all body pairs (meters)."""
    n = state.n_bodies
    if n < 2:
        return 0.0
    rot = np.stack([quat_to_matrix(state.quat[i]) for i in range(n)])
    return float(
        _max_penetration(
            state.pos, rot, state.proxy.probes, state.proxy.face_n, state.proxy.face_d,
            state.proxy.r_bound,
        )
    )


@njit(cache=True)
def _max_penetration(pos, rot, probes, face_n, face_d, r_bound):
    n = pos.shape[0]
    worst = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            dx = pos[j, 0] - pos[i, 0]
            dy = pos[j, 1] - pos[i, 1]
            dz = pos[j, 2] - pos[i, 2]
            if dx * dx + dy * dy + dz * dz > (2 * r_bound) ** 2:
                continue
            for (a, b) in ((i, j), (j, i)):
                for p in range(probes.shape[0]):
                    wx = rot[b, 0, 0] * probes[p, 0] + rot[b, 0, 1] * probes[p, 1] + rot[b, 0, 2] * probes[p, 2] + pos[b, 0]
                    wy = rot[b, 1, 0] * probes[p, 0] + rot[b, 1, 1] * probes[p, 1] + rot[b, 1, 2] * probes[p, 2] + pos[b, 1]
                    wz = rot[b, 2, 0] * probes[p, 0] + rot[b, 2, 1] * probes[p, 1] + rot[b, 2, 2] * probes[p, 2] + pos[b, 2]
                    lx = wx - pos[a, 0]
                    ly = wy - pos[a, 1]
                    lz = wz - pos[a, 2]
                    qx = rot[a, 0, 0] * lx + rot[a, 1, 0] * ly + rot[a, 2, 0] * lz
                    qy = rot[a, 0, 1] * lx + rot[a, 1, 1] * ly + rot[a, 2, 1] * lz
                    qz = rot[a, 0, 2] * lx + rot[a, 1, 2] * ly + rot[a, 2, 2] * lz
                    max_s = -1e30
                    for f in range(face_n.shape[0]):
                        s = face_n[f, 0] * qx + face_n[f, 1] * qy + face_n[f, 2] * qz - face_d[f]
                        if s > max_s:
                            max_s = s
                        if max_s > 0.0:
                            break
                    if max_s < 0.0 and -max_s > worst:
                        worst = -max_s
    return worst


@njit(cache=True, inline="always")
def _quat_to_rot(q, out):
    w, x, y, z = q[0], q[1], q[2], q[3]
    out[0, 0] = 1 - 2 * (y * y + z * z)
    out[0, 1] = 2 * (x * y - w * z)
    out[0, 2] = 2 * (x * z + w * y)
    out[1, 0] = 2 * (x * y + w * z)
    out[1, 1] = 1 - 2 * (x * x + z * z)
    out[1, 2] = 2 * (y * z - w * x)
    out[2, 0] = 2 * (x * z - w * y)
    out[2, 1] = 2 * (y * z + w * x)
    out[2, 2] = 1 - 2 * (x * x + y * y)


@njit(cache=True)
def _run_sim(pos, quat, vel, omega, asleep, sleep_count,
             probes, n_verts, face_n, face_d, inv_mass, inertia_inv,
             r_bound, r_inner, plane_n, plane_d,
             dt, mu, beta, slop, gravity, lin_sleep, ang_sleep,
             sleep_steps, iters, max_steps):
    n = pos.shape[0]
    n_probes = probes.shape[0]
    n_faces = face_n.shape[0]
    n_planes = plane_n.shape[0]

    rot = np.empty((n, 3, 3))
    iinv_w = np.empty((n, 3, 3))
    world_probes = np.empty((n, n_probes, 3))
    pvel = np.zeros((n, 3))
    pomega = np.zeros((n, 3))
    body_depth = np.zeros(n)

    cap = 48 * n + 64
    c_a = np.empty(cap, dtype=np.int64)
    c_b = np.empty(cap, dtype=np.int64)
    c_p = np.empty((cap, 3))
    c_n = np.empty((cap, 3))
    c_depth = np.empty(cap)
    c_key = np.empty(cap, dtype=np.int64)

    # persistent contact impulses for warm starting, matched by key
    prev_nc = 0
    prev_key = np.empty(cap, dtype=np.int64)
    prev_n = np.empty(cap)
    prev_t1 = np.empty(cap)
    prev_t2 = np.empty(cap)

    max_cells = 64 * 64 * 64
    cell_count = np.zeros(max_cells + 1, dtype=np.int64)
    cell_body = np.empty(n, dtype=np.int64)
    body_cell = np.empty(n, dtype=np.int64)

    lin_damp = 0.05
    ang_damp = 0.35  # stands in for rolling resistance; lone rollers must reach sleep
    wake_speed = 0.2
    eps_out = 0.05 * r_bound
    max_bias = 2.0
    vmax = 6.0
    wmax = 50.0  # rad/s; keeps per-step rotation well below a radian

    steps = 0
    for _step in range(max_steps):
        any_awake = False
        for i in range(n):
            if asleep[i] == 0:
                any_awake = True
                break
        if not any_awake:
            break
        steps += 1

        # canary: abort on a blown-up state instead of grinding through it
        if steps % 64 == 0:
            bad = False
            for i in range(n):
                for k in range(3):
                    if not np.isfinite(pos[i, k]) or abs(pos[i, k]) > 100.0:
                        bad = True
                        break
                if bad:
                    break
            if bad:
                return -steps

        # integrate velocities; damping and sleep thresholds ramp on a fixed
        # schedule (+1 per 5 simulated seconds, capped) so marginally creeping
        # bodies cannot hold the settle open indefinitely
        ramp = 1.0 + steps * dt / 5.0
        if ramp > 4.0:
            ramp = 4.0
        for i in range(n):
            if asleep[i] == 0:
                vel[i, 2] -= gravity * dt
                damp = 1.0 - lin_damp * ramp * dt
                vel[i, 0] *= damp
                vel[i, 1] *= damp
                vel[i, 2] *= damp
                adamp = 1.0 - ang_damp * ramp * dt
                omega[i, 0] *= adamp
                omega[i, 1] *= adamp
                omega[i, 2] *= adamp
                sp = (vel[i, 0] ** 2 + vel[i, 1] ** 2 + vel[i, 2] ** 2) ** 0.5
                if sp > vmax:
                    sc = vmax / sp
                    vel[i, 0] *= sc
                    vel[i, 1] *= sc
                    vel[i, 2] *= sc
                om = (omega[i, 0] ** 2 + omega[i, 1] ** 2 + omega[i, 2] ** 2) ** 0.5
                if om > wmax:
                    sc = wmax / om
                    omega[i, 0] *= sc
                    omega[i, 1] *= sc
                    omega[i, 2] *= sc

        # world transforms; inverse inertia is refreshed for every body since
        # sleeping bodies can be woken later in this same step
        for i in range(n):
            _quat_to_rot(quat[i], rot[i])
            for p in range(n_probes):
                for k in range(3):
                    world_probes[i, p, k] = (rot[i, k, 0] * probes[p, 0]
                                             + rot[i, k, 1] * probes[p, 1]
                                             + rot[i, k, 2] * probes[p, 2] + pos[i, k])
            for r_ in range(3):
                for c_ in range(3):
                    acc = 0.0
                    for k in range(3):
                        for l in range(3):
                            acc += rot[i, r_, k] * inertia_inv[k, l] * rot[i, c_, l]
                    iinv_w[i, r_, c_] = acc

        # broad phase: uniform grid over body centers, cell >= 2 r_bound
        gx0 = gy0 = gz0 = 1e30
        gx1 = gy1 = gz1 = -1e30
        for i in range(n):
            if pos[i, 0] < gx0:
                gx0 = pos[i, 0]
            if pos[i, 0] > gx1:
                gx1 = pos[i, 0]
            if pos[i, 1] < gy0:
                gy0 = pos[i, 1]
            if pos[i, 1] > gy1:
                gy1 = pos[i, 1]
            if pos[i, 2] < gz0:
                gz0 = pos[i, 2]
            if pos[i, 2] > gz1:
                gz1 = pos[i, 2]
        cell = 2.05 * r_bound
        nx = int((gx1 - gx0) / cell) + 1
        ny = int((gy1 - gy0) / cell) + 1
        nz = int((gz1 - gz0) / cell) + 1
        if nx > 64:
            nx = 64
        if ny > 64:
            ny = 64
        if nz > 64:
            nz = 64
        csx = max(cell, (gx1 - gx0) / nx + 1e-12)
        csy = max(cell, (gy1 - gy0) / ny + 1e-12)
        csz = max(cell, (gz1 - gz0) / nz + 1e-12)
        n_cells = nx * ny * nz
        for c_ in range(n_cells + 1):
            cell_count[c_] = 0
        for i in range(n):
            ix = int((pos[i, 0] - gx0) / csx)
            iy = int((pos[i, 1] - gy0) / csy)
            iz = int((pos[i, 2] - gz0) / csz)
            if ix < 0:
                ix = 0
            if iy < 0:
                iy = 0
            if iz < 0:
                iz = 0
            if ix >= nx:
                ix = nx - 1
            if iy >= ny:
                iy = ny - 1
            if iz >= nz:
                iz = nz - 1
            cid = (iz * ny + iy) * nx + ix
            body_cell[i] = cid
            cell_count[cid + 1] += 1
        for c_ in range(n_cells):
            cell_count[c_ + 1] += cell_count[c_]
        fill = cell_count[:n_cells + 1].copy()
        for i in range(n):
            cid = body_cell[i]
            cell_body[fill[cid]] = i
            fill[cid] += 1

        # contacts
        nc = 0
        # static planes (awake bodies only)
        for i in range(n):
            if asleep[i] != 0:
                continue
            for p in range(n_probes):
                for k in range(n_planes):
                    depth = plane_d[k] - (plane_n[k, 0] * world_probes[i, p, 0]
                                          + plane_n[k, 1] * world_probes[i, p, 1]
                                          + plane_n[k, 2] * world_probes[i, p, 2])
                    if depth > 0.0 and nc < cap:
                        c_a[nc] = i
                        c_b[nc] = -1
                        c_p[nc, 0] = world_probes[i, p, 0]
                        c_p[nc, 1] = world_probes[i, p, 1]
                        c_p[nc, 2] = world_probes[i, p, 2]
                        c_n[nc, 0] = plane_n[k, 0]
                        c_n[nc, 1] = plane_n[k, 1]
                        c_n[nc, 2] = plane_n[k, 2]
                        c_depth[nc] = depth
                        c_key[nc] = (i * n_probes + p) * n_planes + k
                        nc += 1

        # body pairs via grid neighborhoods
        two_r2 = (2.0 * r_bound) ** 2
        for i in range(n):
            if nc >= cap - 16:
                break
            ix = body_cell[i] % nx
            iy = (body_cell[i] // nx) % ny
            iz = body_cell[i] // (nx * ny)
            for dz in range(-1, 2):
                z_ = iz + dz
                if z_ < 0 or z_ >= nz:
                    continue
                for dy in range(-1, 2):
                    y_ = iy + dy
                    if y_ < 0 or y_ >= ny:
                        continue
                    for dx in range(-1, 2):
                        x_ = ix + dx
                        if x_ < 0 or x_ >= nx:
                            continue
                        cid = (z_ * ny + y_) * nx + x_
                        for s_ in range(cell_count[cid], cell_count[cid + 1]):
                            j = cell_body[s_]
                            if j <= i:
                                continue
                            if asleep[i] != 0 and asleep[j] != 0:
                                continue
                            ddx = pos[j, 0] - pos[i, 0]
                            ddy = pos[j, 1] - pos[i, 1]
                            ddz = pos[j, 2] - pos[i, 2]
                            d2 = ddx * ddx + ddy * ddy + ddz * ddz
                            if d2 > two_r2:
                                continue
                            nc_before = nc
                            # probes of each body against the other's faces
                            for (a, b) in ((j, i), (i, j)):
                                for p in range(n_probes):
                                    lx = world_probes[a, p, 0] - pos[b, 0]
                                    ly = world_probes[a, p, 1] - pos[b, 1]
                                    lz = world_probes[a, p, 2] - pos[b, 2]
                                    qx = rot[b, 0, 0] * lx + rot[b, 1, 0] * ly + rot[b, 2, 0] * lz
                                    qy = rot[b, 0, 1] * lx + rot[b, 1, 1] * ly + rot[b, 2, 1] * lz
                                    qz = rot[b, 0, 2] * lx + rot[b, 1, 2] * ly + rot[b, 2, 2] * lz
                                    max_s = -1e30
                                    best_f = -1
                                    ok = True
                                    for f in range(n_faces):
                                        s = (face_n[f, 0] * qx + face_n[f, 1] * qy
                                             + face_n[f, 2] * qz - face_d[f])
                                        if s > max_s:
                                            max_s = s
                                            best_f = f
                                        if max_s > eps_out:
                                            ok = False
                                            break
                                    if ok and max_s < 0.0 and nc < cap:
                                        c_a[nc] = a
                                        c_b[nc] = b
                                        c_p[nc, 0] = world_probes[a, p, 0]
                                        c_p[nc, 1] = world_probes[a, p, 1]
                                        c_p[nc, 2] = world_probes[a, p, 2]
                                        # world normal of b's face, points b -> a
                                        c_n[nc, 0] = (rot[b, 0, 0] * face_n[best_f, 0]
                                                      + rot[b, 0, 1] * face_n[best_f, 1]
                                                      + rot[b, 0, 2] * face_n[best_f, 2])
                                        c_n[nc, 1] = (rot[b, 1, 0] * face_n[best_f, 0]
                                                      + rot[b, 1, 1] * face_n[best_f, 1]
                                                      + rot[b, 1, 2] * face_n[best_f, 2])
                                        c_n[nc, 2] = (rot[b, 2, 0] * face_n[best_f, 0]
                                                      + rot[b, 2, 1] * face_n[best_f, 1]
                                                      + rot[b, 2, 2] * face_n[best_f, 2])
                                        c_depth[nc] = -max_s
                                        c_key[nc] = (n * n_probes * n_planes
                                                     + ((a * (n + 1) + b) * n_probes + p))
                                        nc += 1
                            if nc == nc_before:
                                # deep coaxial overlap fallback
                                dist = d2 ** 0.5
                                pen = r_inner + r_inner - dist
                                if pen > 0.0 and dist > 1e-12 and nc < cap:
                                    c_a[nc] = j
                                    c_b[nc] = i
                                    c_n[nc, 0] = ddx / dist
                                    c_n[nc, 1] = ddy / dist
                                    c_n[nc, 2] = ddz / dist
                                    c_p[nc, 0] = 0.5 * (pos[i, 0] + pos[j, 0])
                                    c_p[nc, 1] = 0.5 * (pos[i, 1] + pos[j, 1])
                                    c_p[nc, 2] = 0.5 * (pos[i, 2] + pos[j, 2])
                                    c_depth[nc] = pen
                                    c_key[nc] = (n * n_probes * n_planes
                                                 + n * (n + 1) * n_probes
                                                 + (i * (n + 1) + j))
                                    nc += 1
                            if nc > nc_before and (asleep[i] != 0 or asleep[j] != 0):
                                # wake a sleeping partner on real impact
                                sleeper = i if asleep[i] != 0 else j
                                other = j if sleeper == i else i
                                rel = abs(
                                    (vel[other, 0]) * c_n[nc_before, 0]
                                    + (vel[other, 1]) * c_n[nc_before, 1]
                                    + (vel[other, 2]) * c_n[nc_before, 2]
                                )
                                if rel > wake_speed:
                                    asleep[sleeper] = 0
                                    sleep_count[sleeper] = 0

        # track the deepest contact per body: penetrated bodies may not sleep
        for i in range(n):
            body_depth[i] = 0.0
        for c_ in range(nc):
            d_ = c_depth[c_]
            if d_ > body_depth[c_a[c_]]:
                body_depth[c_a[c_]] = d_
            if c_b[c_] >= 0 and d_ > body_depth[c_b[c_]]:
                body_depth[c_b[c_]] = d_

        # solver: sequential impulses with accumulated clamping
        acc_n = np.zeros(nc)
        acc_t1 = np.zeros(nc)
        acc_t2 = np.zeros(nc)
        m_n = np.empty(nc)
        m_t1 = np.empty(nc)
        m_t2 = np.empty(nc)
        m_np = np.empty(nc)  # normal mass ignoring sleep, for pseudo correction
        t1s = np.empty((nc, 3))
        t2s = np.empty((nc, 3))
        bias = np.empty(nc)
        ra = np.empty((nc, 3))
        rb = np.empty((nc, 3))
        ima = np.empty(nc)
        imb = np.empty(nc)

        for c_ in range(nc):
            a = c_a[c_]
            b = c_b[c_]
            nxv, nyv, nzv = c_n[c_, 0], c_n[c_, 1], c_n[c_, 2]
            # tangent basis
            if abs(nzv) < 0.9:
                t1x = nyv * 1.0 - nzv * 0.0
                t1y = nzv * 0.0 - nxv * 1.0
                t1z = nxv * 0.0 - nyv * 0.0
            else:
                t1x = nyv * 0.0 - nzv * 0.0
                t1y = nzv * 1.0 - nxv * 0.0
                t1z = nxv * 0.0 - nyv * 1.0
            tl = (t1x * t1x + t1y * t1y + t1z * t1z) ** 0.5
            t1x /= tl
            t1y /= tl
            t1z /= tl
            t2x = nyv * t1z - nzv * t1y
            t2y = nzv * t1x - nxv * t1z
            t2z = nxv * t1y - nyv * t1x
            t1s[c_, 0], t1s[c_, 1], t1s[c_, 2] = t1x, t1y, t1z
            t2s[c_, 0], t2s[c_, 1], t2s[c_, 2] = t2x, t2y, t2z

            ima[c_] = inv_mass if asleep[a] == 0 else 0.0
            rax = c_p[c_, 0] - pos[a, 0]
            ray = c_p[c_, 1] - pos[a, 1]
            raz = c_p[c_, 2] - pos[a, 2]
            ra[c_, 0], ra[c_, 1], ra[c_, 2] = rax, ray, raz
            if b >= 0:
                imb[c_] = inv_mass if asleep[b] == 0 else 0.0
                rbx = c_p[c_, 0] - pos[b, 0]
                rby = c_p[c_, 1] - pos[b, 1]
                rbz = c_p[c_, 2] - pos[b, 2]
            else:
                imb[c_] = 0.0
                rbx = rby = rbz = 0.0
            rb[c_, 0], rb[c_, 1], rb[c_, 2] = rbx, rby, rbz

            for axis in range(3):
                if axis == 0:
                    ux, uy, uz = nxv, nyv, nzv
                elif axis == 1:
                    ux, uy, uz = t1x, t1y, t1z
                else:
                    ux, uy, uz = t2x, t2y, t2z
                k = ima[c_] + imb[c_]
                # (r x u)^T I^-1 (r x u) for a
                if ima[c_] > 0.0:
                    cx = ray * uz - raz * uy
                    cy = raz * ux - rax * uz
                    cz = rax * uy - ray * ux
                    k += (cx * (iinv_w[a, 0, 0] * cx + iinv_w[a, 0, 1] * cy + iinv_w[a, 0, 2] * cz)
                          + cy * (iinv_w[a, 1, 0] * cx + iinv_w[a, 1, 1] * cy + iinv_w[a, 1, 2] * cz)
                          + cz * (iinv_w[a, 2, 0] * cx + iinv_w[a, 2, 1] * cy + iinv_w[a, 2, 2] * cz))
                if b >= 0 and imb[c_] > 0.0:
                    cx = rby * uz - rbz * uy
                    cy = rbz * ux - rbx * uz
                    cz = rbx * uy - rby * ux
                    k += (cx * (iinv_w[b, 0, 0] * cx + iinv_w[b, 0, 1] * cy + iinv_w[b, 0, 2] * cz)
                          + cy * (iinv_w[b, 1, 0] * cx + iinv_w[b, 1, 1] * cy + iinv_w[b, 1, 2] * cz)
                          + cz * (iinv_w[b, 2, 0] * cx + iinv_w[b, 2, 1] * cy + iinv_w[b, 2, 2] * cz))
                inv_k = 1.0 / k if k > 0.0 else 0.0
                if axis == 0:
                    m_n[c_] = inv_k
                elif axis == 1:
                    m_t1[c_] = inv_k
                else:
                    m_t2[c_] = inv_k

            # pseudo-correction mass treats sleeping bodies as movable so
            # resolved positions never freeze mid-penetration
            kp = inv_mass if b < 0 else 2.0 * inv_mass
            cx = ra[c_, 1] * nzv - ra[c_, 2] * nyv
            cy = ra[c_, 2] * nxv - ra[c_, 0] * nzv
            cz = ra[c_, 0] * nyv - ra[c_, 1] * nxv
            kp += (cx * (iinv_w[a, 0, 0] * cx + iinv_w[a, 0, 1] * cy + iinv_w[a, 0, 2] * cz)
                   + cy * (iinv_w[a, 1, 0] * cx + iinv_w[a, 1, 1] * cy + iinv_w[a, 1, 2] * cz)
                   + cz * (iinv_w[a, 2, 0] * cx + iinv_w[a, 2, 1] * cy + iinv_w[a, 2, 2] * cz))
            if b >= 0:
                cx = rb[c_, 1] * nzv - rb[c_, 2] * nyv
                cy = rb[c_, 2] * nxv - rb[c_, 0] * nzv
                cz = rb[c_, 0] * nyv - rb[c_, 1] * nxv
                kp += (cx * (iinv_w[b, 0, 0] * cx + iinv_w[b, 0, 1] * cy + iinv_w[b, 0, 2] * cz)
                       + cy * (iinv_w[b, 1, 0] * cx + iinv_w[b, 1, 1] * cy + iinv_w[b, 1, 2] * cz)
                       + cz * (iinv_w[b, 2, 0] * cx + iinv_w[b, 2, 1] * cy + iinv_w[b, 2, 2] * cz))
            m_np[c_] = 1.0 / kp if kp > 0.0 else 0.0
            bb = beta / dt * (c_depth[c_] - slop)
            if bb < 0.0:
                bb = 0.0
            if bb > max_bias:
                bb = max_bias
            bias[c_] = bb

        # warm start from the previous step's matched contacts
        if prev_nc > 0:
            order = np.argsort(prev_key[:prev_nc])
            skeys = prev_key[:prev_nc][order]
            for c_ in range(nc):
                k_ = c_key[c_]
                lo_ = np.searchsorted(skeys, k_)
                if lo_ < prev_nc and skeys[lo_] == k_:
                    idx = order[lo_]
                    acc_n[c_] = prev_n[idx]
                    acc_t1[c_] = prev_t1[idx]
                    acc_t2[c_] = prev_t2[idx]
                    a = c_a[c_]
                    b = c_b[c_]
                    jx = (acc_n[c_] * c_n[c_, 0] + acc_t1[c_] * t1s[c_, 0]
                          + acc_t2[c_] * t2s[c_, 0])
                    jy = (acc_n[c_] * c_n[c_, 1] + acc_t1[c_] * t1s[c_, 1]
                          + acc_t2[c_] * t2s[c_, 1])
                    jz = (acc_n[c_] * c_n[c_, 2] + acc_t1[c_] * t1s[c_, 2]
                          + acc_t2[c_] * t2s[c_, 2])
                    _apply(vel, omega, iinv_w, a, ima[c_], ra[c_], jx, jy, jz, 1.0)
                    if b >= 0 and imb[c_] > 0.0:
                        _apply(vel, omega, iinv_w, b, imb[c_], rb[c_], jx, jy, jz, -1.0)

        for _it in range(iters):
            for c_ in range(nc):
                a = c_a[c_]
                b = c_b[c_]
                # relative velocity at contact
                vx = vel[a, 0] + omega[a, 1] * ra[c_, 2] - omega[a, 2] * ra[c_, 1]
                vy = vel[a, 1] + omega[a, 2] * ra[c_, 0] - omega[a, 0] * ra[c_, 2]
                vz = vel[a, 2] + omega[a, 0] * ra[c_, 1] - omega[a, 1] * ra[c_, 0]
                if b >= 0:
                    vx -= vel[b, 0] + omega[b, 1] * rb[c_, 2] - omega[b, 2] * rb[c_, 1]
                    vy -= vel[b, 1] + omega[b, 2] * rb[c_, 0] - omega[b, 0] * rb[c_, 2]
                    vz -= vel[b, 2] + omega[b, 0] * rb[c_, 1] - omega[b, 1] * rb[c_, 0]
                vn = vx * c_n[c_, 0] + vy * c_n[c_, 1] + vz * c_n[c_, 2]
                lam = -m_n[c_] * vn
                new_acc = acc_n[c_] + lam
                if new_acc < 0.0:
                    new_acc = 0.0
                dlam = new_acc - acc_n[c_]
                acc_n[c_] = new_acc
                jx = dlam * c_n[c_, 0]
                jy = dlam * c_n[c_, 1]
                jz = dlam * c_n[c_, 2]
                _apply(vel, omega, iinv_w, a, ima[c_], ra[c_], jx, jy, jz, 1.0)
                if b >= 0 and imb[c_] > 0.0:
                    _apply(vel, omega, iinv_w, b, imb[c_], rb[c_], jx, jy, jz, -1.0)

                # friction along both tangents
                max_f = mu * acc_n[c_]
                for axis in range(2):
                    tx = t1s[c_, 0] if axis == 0 else t2s[c_, 0]
                    ty = t1s[c_, 1] if axis == 0 else t2s[c_, 1]
                    tz = t1s[c_, 2] if axis == 0 else t2s[c_, 2]
                    vx = vel[a, 0] + omega[a, 1] * ra[c_, 2] - omega[a, 2] * ra[c_, 1]
                    vy = vel[a, 1] + omega[a, 2] * ra[c_, 0] - omega[a, 0] * ra[c_, 2]
                    vz = vel[a, 2] + omega[a, 0] * ra[c_, 1] - omega[a, 1] * ra[c_, 0]
                    if b >= 0:
                        vx -= vel[b, 0] + omega[b, 1] * rb[c_, 2] - omega[b, 2] * rb[c_, 1]
                        vy -= vel[b, 1] + omega[b, 2] * rb[c_, 0] - omega[b, 0] * rb[c_, 2]
                        vz -= vel[b, 2] + omega[b, 0] * rb[c_, 1] - omega[b, 1] * rb[c_, 0]
                    vt = vx * tx + vy * ty + vz * tz
                    mt = m_t1[c_] if axis == 0 else m_t2[c_]
                    lam_t = -mt * vt
                    acc = acc_t1[c_] if axis == 0 else acc_t2[c_]
                    new_t = acc + lam_t
                    if new_t > max_f:
                        new_t = max_f
                    if new_t < -max_f:
                        new_t = -max_f
                    dlt = new_t - acc
                    if axis == 0:
                        acc_t1[c_] = new_t
                    else:
                        acc_t2[c_] = new_t
                    jx = dlt * tx
                    jy = dlt * ty
                    jz = dlt * tz
                    _apply(vel, omega, iinv_w, a, ima[c_], ra[c_], jx, jy, jz, 1.0)
                    if b >= 0 and imb[c_] > 0.0:
                        _apply(vel, omega, iinv_w, b, imb[c_], rb[c_], jx, jy, jz, -1.0)

        # split-impulse positional correction: penetration is resolved through
        # pseudo-velocities that never enter the real velocity state, so
        # resting bodies can actually reach the sleep thresholds
        if nc > 0:
            for i in range(n):
                pvel[i, 0] = pvel[i, 1] = pvel[i, 2] = 0.0
                pomega[i, 0] = pomega[i, 1] = pomega[i, 2] = 0.0
            for _it in range(4):
                for c_ in range(nc):
                    if bias[c_] <= 0.0:
                        continue
                    a = c_a[c_]
                    b = c_b[c_]
                    vx = pvel[a, 0] + pomega[a, 1] * ra[c_, 2] - pomega[a, 2] * ra[c_, 1]
                    vy = pvel[a, 1] + pomega[a, 2] * ra[c_, 0] - pomega[a, 0] * ra[c_, 2]
                    vz = pvel[a, 2] + pomega[a, 0] * ra[c_, 1] - pomega[a, 1] * ra[c_, 0]
                    if b >= 0:
                        vx -= pvel[b, 0] + pomega[b, 1] * rb[c_, 2] - pomega[b, 2] * rb[c_, 1]
                        vy -= pvel[b, 1] + pomega[b, 2] * rb[c_, 0] - pomega[b, 0] * rb[c_, 2]
                        vz -= pvel[b, 2] + pomega[b, 0] * rb[c_, 1] - pomega[b, 1] * rb[c_, 0]
                    vn = vx * c_n[c_, 0] + vy * c_n[c_, 1] + vz * c_n[c_, 2]
                    lam = -m_np[c_] * (vn - bias[c_])
                    if lam < 0.0:
                        lam = 0.0
                    jx = lam * c_n[c_, 0]
                    jy = lam * c_n[c_, 1]
                    jz = lam * c_n[c_, 2]
                    _apply(pvel, pomega, iinv_w, a, inv_mass, ra[c_], jx, jy, jz, 1.0)
                    if b >= 0:
                        _apply(pvel, pomega, iinv_w, b, inv_mass, rb[c_], jx, jy, jz, -1.0)

        # cache impulses for next-step warm starting
        prev_nc = nc
        for c_ in range(nc):
            prev_key[c_] = c_key[c_]
            prev_n[c_] = acc_n[c_]
            prev_t1[c_] = acc_t1[c_]
            prev_t2[c_] = acc_t2[c_]

        # integrate positions (real + pseudo velocities) and sleep bookkeeping
        for i in range(n):
            if asleep[i] != 0:
                continue
            pos[i, 0] += (vel[i, 0] + pvel[i, 0]) * dt
            pos[i, 1] += (vel[i, 1] + pvel[i, 1]) * dt
            pos[i, 2] += (vel[i, 2] + pvel[i, 2]) * dt
            w, x, y, z = quat[i, 0], quat[i, 1], quat[i, 2], quat[i, 3]
            ox = omega[i, 0] + pomega[i, 0]
            oy = omega[i, 1] + pomega[i, 1]
            oz = omega[i, 2] + pomega[i, 2]
            dw = 0.5 * (-ox * x - oy * y - oz * z)
            dx_ = 0.5 * (ox * w + oy * z - oz * y)
            dy_ = 0.5 * (oy * w + oz * x - ox * z)
            dz_ = 0.5 * (oz * w + ox * y - oy * x)
            w += dw * dt
            x += dx_ * dt
            y += dy_ * dt
            z += dz_ * dt
            norm = (w * w + x * x + y * y + z * z) ** 0.5
            if norm > 1e-12:
                quat[i, 0] = w / norm
                quat[i, 1] = x / norm
                quat[i, 2] = y / norm
                quat[i, 3] = z / norm
            else:
                quat[i, 0] = 1.0
                quat[i, 1] = quat[i, 2] = quat[i, 3] = 0.0

            # sleep thresholds widen with the same late-budget ramp, so a few
            # stragglers creeping at a few mm/s cannot hold the settle open
            sp2 = vel[i, 0] ** 2 + vel[i, 1] ** 2 + vel[i, 2] ** 2
            om2 = omega[i, 0] ** 2 + omega[i, 1] ** 2 + omega[i, 2] ** 2
            ls = lin_sleep * ramp
            as_ = ang_sleep * ramp
            if sp2 < ls * ls and om2 < as_ * as_:
                sleep_count[i] += 1
                if sleep_count[i] >= sleep_steps:
                    asleep[i] = 1
                    vel[i, 0] = vel[i, 1] = vel[i, 2] = 0.0
                    omega[i, 0] = omega[i, 1] = omega[i, 2] = 0.0
            else:
                sleep_count[i] = 0

    return steps


@njit(cache=True, inline="always")
def _apply(vel, omega, iinv_w, body, im, r, jx, jy, jz, sign):
    vel[body, 0] += sign * im * jx
    vel[body, 1] += sign * im * jy
    vel[body, 2] += sign * im * jz
    if im > 0.0:
        tx = r[1] * jz - r[2] * jy
        ty = r[2] * jx - r[0] * jz
        tz = r[0] * jy - r[1] * jx
        omega[body, 0] += sign * (iinv_w[body, 0, 0] * tx + iinv_w[body, 0, 1] * ty + iinv_w[body, 0, 2] * tz)
        omega[body, 1] += sign * (iinv_w[body, 1, 0] * tx + iinv_w[body, 1, 1] * ty + iinv_w[body, 1, 2] * tz)
        omega[body, 2] += sign * (iinv_w[body, 2, 0] * tx + iinv_w[body, 2, 1] * ty + iinv_w[body, 2, 2] * tz)
