"""File formats.

PFM for float images (normal and depth maps), PGM P5 for instance masks,
PLY (ASCII and binary little-endian) for point clouds and meshes with an
optional per-vertex integer property plane_id, OBJ for meshes, and plain
text tables for cameras and plane records.
"""

from __future__ import annotations

import numpy as np

from .lifting import CameraView
from .mesh import TriMesh


# ---------------------------------------------------------------------------
# PFM (float32 images; negative scale = little-endian; rows bottom-up)
# ---------------------------------------------------------------------------

def write_pfm(path, data) -> None:
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        magic = b"Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        magic = b"PF"
    else:
        raise ValueError("PFM data must be (H, W) or (H, W, 3)")
    h, w = data.shape[:2]
    with open(path, "wb") as f:
        f.write(magic + b"\n")
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")
        f.write(np.flipud(data).astype("<f4").tobytes())


def _read_token(f) -> bytes:
    tok = b""
    while True:
        ch = f.read(1)
        if ch == b"":
            raise ValueError("unexpected EOF")
        if ch == b"#":  # comment to end of line
            while ch not in (b"\n", b""):
                ch = f.read(1)
            continue
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = _read_token(f)
        if magic not in (b"PF", b"Pf"):
            raise ValueError("not a PFM file")
        w = int(_read_token(f))
        h = int(_read_token(f))
        scale = float(_read_token(f))
        channels = 3 if magic == b"PF" else 1
        count = w * h * channels
        dt = "<f4" if scale < 0 else ">f4"
        raw = f.read(count * 4)
        if len(raw) != count * 4:
            raise ValueError("unexpected EOF")
        data = np.frombuffer(raw, dtype=dt).reshape(h, w, channels)
        data = np.flipud(data).astype(np.float32)
        return data[..., 0] if channels == 1 else data


# ---------------------------------------------------------------------------
# PGM P5 (instance ids; 2-byte big-endian samples when maxval > 255)
# ---------------------------------------------------------------------------

def write_pgm(path, labels) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError("PGM data must be (H, W)")
    if labels.min() < 0 or labels.max() > 65535:
        raise ValueError("instance ids must fit 0..65535")
    h, w = labels.shape
    with open(path, "wb") as f:
        f.write(b"P5\n")
        f.write(f"{w} {h}\n".encode())
        f.write(b"65535\n")
        f.write(labels.astype(">u2").tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        if _read_token(f) != b"P5":
            raise ValueError("not a binary PGM file")
        w = int(_read_token(f))
        h = int(_read_token(f))
        maxval = int(_read_token(f))
        dt, size = (">u2", 2) if maxval > 255 else ("u1", 1)
        raw = f.read(w * h * size)
        if len(raw) != w * h * size:
            raise ValueError("unexpected EOF")
        return np.frombuffer(raw, dtype=dt).reshape(h, w).astype(np.int32)


# ---------------------------------------------------------------------------
# PLY
# ---------------------------------------------------------------------------

_PLY_TYPES = {
    "float": ("<f4", 4),
    "float32": ("<f4", 4),
    "double": ("<f8", 8),
    "float64": ("<f8", 8),
    "int": ("<i4", 4),
    "int32": ("<i4", 4),
    "uint": ("<u4", 4),
    "uint32": ("<u4", 4),
    "short": ("<i2", 2),
    "ushort": ("<u2", 2),
    "char": ("i1", 1),
    "uchar": ("u1", 1),
    "uint8": ("u1", 1),
    "int8": ("i1", 1),
}


def _ply_header(n_vertex, n_face, binary, with_labels):
    lines = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        "comment planekit",
        f"element vertex {n_vertex}",
        "property float x",
        "property float y",
        "property float z",
    ]
    if with_labels:
        lines.append("property int plane_id")
    if n_face is not None:
        lines.append(f"element face {n_face}")
        lines.append("property list uchar int vertex_indices")
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode()


def write_ply_points(path, points, labels=None, binary: bool = True) -> None:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3).astype("<f4")
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if len(labels) != len(pts):
            raise ValueError("labels length mismatch")
    with open(path, "wb") as f:
        f.write(_ply_header(len(pts), None, binary, labels is not None))
        if binary:
            if labels is None:
                f.write(pts.tobytes())
            else:
                rec = np.zeros(
                    len(pts), dtype=[("xyz", "<f4", 3), ("id", "<i4")]
                )
                rec["xyz"] = pts
                rec["id"] = labels
                f.write(rec.tobytes())
        else:
            for i, p in enumerate(pts):
                row = f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}"
                if labels is not None:
                    row += f" {int(labels[i])}"
                f.write((row + "\n").encode())


def write_ply_mesh(path, mesh: TriMesh, binary: bool = True) -> None:
    pts = mesh.vertices.astype("<f4")
    labels = mesh.labels
    with open(path, "wb") as f:
        f.write(_ply_header(len(pts), mesh.n_faces, binary, labels is not None))
        if binary:
            if labels is None:
                f.write(pts.tobytes())
            else:
                rec = np.zeros(len(pts), dtype=[("xyz", "<f4", 3), ("id", "<i4")])
                rec["xyz"] = pts
                rec["id"] = labels
                f.write(rec.tobytes())
            frec = np.zeros(mesh.n_faces, dtype=[("n", "u1"), ("idx", "<i4", 3)])
            frec["n"] = 3
            frec["idx"] = mesh.faces
            f.write(frec.tobytes())
        else:
            for i, p in enumerate(pts):
                row = f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}"
                if labels is not None:
                    row += f" {int(labels[i])}"
                f.write((row + "\n").encode())
            for face in mesh.faces:
                f.write(f"3 {face[0]} {face[1]} {face[2]}\n".encode())


def _parse_ply_header(f):
    if f.readline().strip() != b"ply":
        raise ValueError("not a PLY file")
    fmt = None
    elements = []  # (name, count, [(prop_name, type, is_list, list_len_type)])
    while True:
        line = f.readline()
        if not line:
            raise ValueError("unexpected EOF")
        tok = line.decode("ascii", "replace").split()
        if not tok or tok[0] == "comment":
            continue
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise ValueError("property before element")
            if tok[1] == "list":
                elements[-1][2].append((tok[4], tok[3], True, tok[2]))
            else:
                elements[-1][2].append((tok[2], tok[1], False, None))
        elif tok[0] == "end_header":
            break
    if fmt not in ("ascii", "binary_little_endian"):
        raise ValueError(f"unsupported PLY format {fmt}")
    return fmt, elements


def _read_ply(path):
    """Returns (vertices, labels_or_None, faces_or_None)."""
    with open(path, "rb") as f:
        fmt, elements = _parse_ply_header(f)
        verts = labels = faces = None
        for name, count, props in elements:
            if name == "vertex":
                scalar = [(p, t) for p, t, is_list, _ in props if not is_list]
                if any(is_list for _, _, is_list, _ in props):
                    raise ValueError("list property on vertex element")
                names = [p for p, _ in scalar]
                for req in ("x", "y", "z"):
                    if req not in names:
                        raise ValueError("vertex element missing x/y/z")
                if fmt == "ascii":
                    rows = []
                    for _ in range(count):
                        line = f.readline()
                        if not line:
                            raise ValueError("unexpected EOF")
                        vals = line.split()
                        if len(vals) < len(names):
                            raise ValueError("short vertex row")
                        rows.append([float(v) for v in vals[: len(names)]])
                    arr = np.asarray(rows, dtype=np.float64).reshape(count, len(names))
                    get = {p: arr[:, i] for i, p in enumerate(names)}
                else:
                    dt = np.dtype([(p, _PLY_TYPES[t][0]) for p, t in scalar])
                    raw = f.read(dt.itemsize * count)
                    if len(raw) != dt.itemsize * count:
                        raise ValueError("unexpected EOF")
                    rec = np.frombuffer(raw, dtype=dt)
                    get = {p: rec[p] for p, _ in scalar}
                verts = np.stack(
                    [np.asarray(get["x"], np.float64),
                     np.asarray(get["y"], np.float64),
                     np.asarray(get["z"], np.float64)], axis=1
                )
                if "plane_id" in get:
                    labels = np.asarray(get["plane_id"], dtype=np.int64)
            elif name == "face":
                out = []
                if fmt == "ascii":
                    for _ in range(count):
                        line = f.readline()
                        if not line:
                            raise ValueError("unexpected EOF")
                        vals = [int(v) for v in line.split()]
                        if not vals or len(vals) < 1 + vals[0]:
                            raise ValueError("short face row")
                        out.append(vals[1 : 1 + vals[0]])
                else:
                    (pname, ptype, is_list, ltype), = props
                    if not is_list:
                        raise ValueError("face element without list property")
                    ldt, lsize = _PLY_TYPES[ltype]
                    idt, isize = _PLY_TYPES[ptype]
                    for _ in range(count):
                        raw = f.read(lsize)
                        if len(raw) != lsize:
                            raise ValueError("unexpected EOF")
                        k = int(np.frombuffer(raw, dtype=ldt)[0])
                        raw = f.read(isize * k)
                        if len(raw) != isize * k:
                            raise ValueError("unexpected EOF")
                        out.append(np.frombuffer(raw, dtype=idt).tolist())
                faces = out
            else:
                raise ValueError(f"unsupported PLY element {name}")
        return verts, labels, faces


def read_ply_points(path):
    """(points (N, 3) float64, labels or None)."""
    verts, labels, _ = _read_ply(path)
    if verts is None:
        raise ValueError("PLY has no vertex element")
    return verts, labels


def _fan(faces):
    tris = []
    for poly in faces:
        if len(poly) < 3:
            raise ValueError("face with fewer than 3 indices")
        for k in range(1, len(poly) - 1):
            tris.append((poly[0], poly[k], poly[k + 1]))
    return np.asarray(tris, dtype=np.int64).reshape(-1, 3)


def read_ply_mesh(path) -> TriMesh:
    verts, labels, faces = _read_ply(path)
    if verts is None or faces is None:
        raise ValueError("PLY is not a mesh (missing vertex or face element)")
    return TriMesh(verts, _fan(faces), labels)


# ---------------------------------------------------------------------------
# OBJ
# ---------------------------------------------------------------------------

def write_obj(path, mesh: TriMesh) -> None:
    with open(path, "w") as f:
        for v in mesh.vertices:
            f.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for face in mesh.faces:  # OBJ indices are 1-based
            f.write(f"f {face[0] + 1} {face[1] + 1} {face[2] + 1}\n")


def read_obj(path) -> TriMesh:
    verts, faces = [], []
    with open(path, "r") as f:
        for line in f:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "v":
                verts.append([float(x) for x in tok[1:4]])
            elif tok[0] == "f":
                idx = [int(t.split("/")[0]) - 1 for t in tok[1:]]
                faces.append(idx)
    if not verts:
        raise ValueError("OBJ has no vertices")
    return TriMesh(np.asarray(verts, dtype=np.float64), _fan(faces))


# ---------------------------------------------------------------------------
# Camera and plane text tables
# ---------------------------------------------------------------------------

_CAM_HEADER = (
    "# view_id fx fy cx cy r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz width height\n"
)


def write_cameras(path, views) -> None:
    with open(path, "w") as f:
        f.write(_CAM_HEADER)
        for i, v in enumerate(views):
            vals = [
                v.K[0, 0], v.K[1, 1], v.K[0, 2], v.K[1, 2],
                *v.R.ravel(), *v.t.ravel(),
            ]
            f.write(
                f"{i} " + " ".join(repr(float(x)) for x in vals)
                + f" {v.width} {v.height}\n"
            )


def read_cameras(path):
    views = []
    with open(path, "r") as f:
        for line in f:
            tok = line.split()
            if not tok or tok[0].startswith("#"):
                continue
            if len(tok) != 19:
                raise ValueError("camera record must have 19 fields")
            vals = [float(x) for x in tok[1:17]]
            fx, fy, cx, cy = vals[:4]
            K = np.array([[fx, 0, cx], [0, fy, cy], [0, 0, 1.0]])
            R = np.asarray(vals[4:13]).reshape(3, 3)
            t = np.asarray(vals[13:16])
            views.append(
                CameraView(K=K, R=R, t=t, width=int(tok[17]), height=int(tok[18]))
            )
    return views


def write_planes(path, records) -> None:
    """records: iterable of (plane_id, PlaneEq, PlaneBasis, member indices)."""
    with open(path, "w") as f:
        f.write("# plane_id nx ny nz d f1(3) f2(3) f3(3) n_members members...\n")
        for pid, eq, basis, members in records:
            nums = [*eq.normal, eq.offset, *basis.f1, *basis.f2, *basis.f3]
            mem = np.asarray(members, dtype=np.int64)
            f.write(
                f"{int(pid)} "
                + " ".join(repr(float(x)) for x in nums)
                + f" {len(mem)} "
                + " ".join(str(int(m)) for m in mem)
                + "\n"
            )


def read_planes(path):
    """Returns list of (plane_id, PlaneEq, PlaneBasis, member index array)."""
    from .planefit import PlaneBasis, PlaneEq

    out = []
    with open(path, "r") as f:
        for line in f:
            tok = line.split()
            if not tok or tok[0].startswith("#"):
                continue
            if len(tok) < 15:
                raise ValueError("plane record too short")
            pid = int(tok[0])
            vals = [float(x) for x in tok[1:14]]
            eq = PlaneEq(normal=np.asarray(vals[0:3]), offset=vals[3])
            basis = PlaneBasis(
                f1=np.asarray(vals[4:7]),
                f2=np.asarray(vals[7:10]),
                f3=np.asarray(vals[10:13]),
            )
            n_mem = int(tok[14])
            if len(tok) != 15 + n_mem:
                raise ValueError("plane record member count mismatch")
            members = np.asarray([int(x) for x in tok[15:]], dtype=np.int64)
            out.append((pid, eq, basis, members))
    return out
