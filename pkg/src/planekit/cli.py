"""Command-line interface.

Subcommands: synth, detect, lift, fit, refine, spc, eval, info.  One
directory holds one scene; stages read and update its manifest, so the
pipeline is resumable and each stage is separately invocable.  All
randomness is seeded (default 0) and results are independent of
--threads.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import formats, scene as scenemod
from .geom2d import DegenerateInputError
from .lifting import lift_scene
from .metrics import planar_metrics, sample_mesh, scene_metrics
from .optim import ParamPoint, ReparamState, fit_planar_scene
from .perception import MaskSet, detect_view_planes
from .planefit import PlaneBasis, project_to_plane, ransac_plane, select_basis, to_barycentric
from .refine import PlaneVertexCluster, assign_vertices, refine_mesh
from .scene import ERR_DIMENSION, ERR_SCHEMA, SceneError
from .spc import correct_supportive_plane, detach_object, seal_contact
from .synth import SceneSpec, build_scene, perturb_dense_mesh, render_view

log = logging.getLogger(__name__)

EXIT_CODES = {"missing_file": 3, "schema": 4, "dimension": 5, "parse": 6}

ALPHA_DEFAULT = 0.98
SIGMA_DEFAULT = 200
DELTA_DEFAULT = 0.005


def _sub_seed(*parts) -> int:
    return int(np.random.SeedSequence(tuple(int(p) for p in parts)).generate_state(1)[0])


def _parse_pair(text, sep="x", n=2, cast=int):
    parts = text.split(sep)
    if len(parts) != n:
        raise ValueError(f"expected {n} values separated by '{sep}': {text!r}")
    return tuple(cast(p) for p in parts)


def _parse_id_list(text):
    try:
        return [int(p) for p in text.split(",") if p != ""]
    except ValueError:
        raise ValueError(f"expected comma-separated integer ids: {text!r}")


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def _object_layout(spec: SceneSpec, count: int, on_table: bool):
    """Deterministic non-intersecting object placement."""
    sizes = [(0.4, 0.3, 0.3), (0.3, 0.4, 0.25), (0.25, 0.25, 0.35)]
    if on_table:
        xs = np.linspace(-0.5, 0.5, count) if count > 1 else [0.0]
        for k in range(count):
            w, d, h = sizes[k % len(sizes)]
            spec.add_box(
                (float(xs[k]), 0.0), (min(w, 0.35), min(d, 0.5), h),
                support_z=0.75, name=f"object{k}",
            )
    else:
        radius = 1.2
        for k in range(count):
            ang = 2.0 * np.pi * k / max(count, 1) + 0.3
            spec.add_box(
                (radius * np.cos(ang), radius * np.sin(ang)),
                sizes[k % len(sizes)],
                support_z=0.0,
                name=f"object{k}",
            )


def cmd_synth(args) -> int:
    w, h = _parse_pair(args.res, "x", 2, int)
    room = _parse_pair(args.room, "x", 3, float)
    spec = SceneSpec.box_room(
        room, cam_count=args.views, image_size=(w, h), cloud_points=args.cloud_points
    )
    if args.table:
        spec.add_table()
    if args.objects:
        _object_layout(spec, args.objects, on_table=args.table)

    mesh_edge = args.mesh_edge if args.mesh_edge > 0 else None
    bundle = build_scene(spec, seed=args.seed, mesh_edge=mesh_edge)
    kappa = args.normal_kappa if args.normal_kappa > 0 else None

    def render_one(i):
        return render_view(
            spec.rects,
            bundle.views[i],
            normal_kappa=kappa,
            seed=_sub_seed(args.seed, 1, i),
            mask_erode=args.mask_erode,
        )

    with ThreadPoolExecutor(max_workers=max(args.threads, 1)) as pool:
        renders = list(pool.map(render_one, range(len(bundle.views))))

    meshes = {"gt": bundle.mesh}
    if args.dense_edge > 0:
        meshes["dense"] = perturb_dense_mesh(
            spec, args.dense_edge, args.dense_sigma, seed=_sub_seed(args.seed, 2)
        )

    params = {
        "seed": args.seed,
        "views": args.views,
        "res": args.res,
        "room": args.room,
        "table": bool(args.table),
        "objects": args.objects,
        "cloud_points": args.cloud_points,
        "mesh_edge": args.mesh_edge,
        "dense_edge": args.dense_edge,
        "dense_sigma": args.dense_sigma,
        "normal_kappa": args.normal_kappa,
        "mask_erode": args.mask_erode,
    }
    scenemod.save_scene(
        args.out,
        bundle.views,
        renders=renders,
        cloud=bundle.cloud,
        cloud_labels=bundle.cloud_labels,
        params=params,
        meshes=meshes,
    )
    print(
        f"synth: {len(bundle.views)} views, {len(bundle.cloud)} cloud points, "
        f"{bundle.mesh.n_vertices} mesh vertices -> {args.out}"
    )
    return 0


# ---------------------------------------------------------------------------
# detect
# ---------------------------------------------------------------------------

def cmd_detect(args) -> int:
    sc = scenemod.load_scene(args.scene)
    if any(nm is None for nm in sc.normals) or any(mk is None for mk in sc.masks):
        raise SceneError(ERR_SCHEMA, "scene lacks normal maps or instance masks")

    def detect_one(i):
        return detect_view_planes(
            sc.normals[i],
            MaskSet.from_instance_map(sc.masks[i]),
            alpha=args.alpha,
            sigma=args.sigma,
            seed=_sub_seed(args.seed, 3, i),
        )

    with ThreadPoolExecutor(max_workers=max(args.threads, 1)) as pool:
        results = list(pool.map(detect_one, range(sc.n_views)))

    out_dir = sc.root / "detect"
    out_dir.mkdir(exist_ok=True)
    counts = []
    for i, pm in enumerate(results):
        rel = f"detect/planes_{i:03d}.pgm"
        formats.write_pgm(sc.root / rel, pm.labels)
        sc.manifest["views"][i]["plane_mask"] = rel
        counts.append(len(pm.instance_ids))
    sc.manifest.setdefault("params", {}).update(
        {"alpha": args.alpha, "sigma": args.sigma, "detect_seed": args.seed}
    )
    scenemod.write_manifest(sc.root, sc.manifest)
    for i, c in enumerate(counts):
        print(f"detect: view {i}: {c} planes")
    print(f"detect: {sc.n_views} views done, mean {np.mean(counts):.2f} planes/view")
    return 0


# ---------------------------------------------------------------------------
# lift
# ---------------------------------------------------------------------------

def cmd_lift(args) -> int:
    sc = scenemod.load_scene(args.scene)
    if sc.cloud is None:
        raise SceneError(ERR_SCHEMA, "scene has no point cloud")
    if all(pm is None for pm in sc.plane_masks):
        raise SceneError(ERR_SCHEMA, "scene has no per-view plane masks (run detect)")

    graph, part = lift_scene(
        sc.cloud,
        sc.views,
        seed=args.seed,
        resolution=args.resolution,
        min_cluster_size=args.min_cluster,
        max_instance_points=args.max_instance_points,
        depth_margin=args.depth_margin,
    )
    rel = "cloud_labeled.ply"
    formats.write_ply_points(sc.root / rel, sc.cloud, labels=part.cluster_of)
    sc.manifest["cloud_labeled"] = rel
    sc.manifest.setdefault("params", {}).update(
        {"lift_seed": args.seed, "resolution": args.resolution,
         "min_cluster": args.min_cluster}
    )
    scenemod.write_manifest(sc.root, sc.manifest)
    q = part.modularity_trace[-1] if part.modularity_trace else float("nan")
    print(
        f"lift: {graph.n_nodes} points, {graph.n_edges} edges, "
        f"{part.n_clusters} clusters, modularity {q:.6f}"
    )
    return 0


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def cmd_fit(args) -> int:
    sc = scenemod.load_scene(args.scene)
    if sc.cloud is None or sc.cloud_labels is None:
        raise SceneError(ERR_SCHEMA, "scene has no clustered cloud (run lift)")
    cloud = sc.cloud
    labels = np.asarray(sc.cloud_labels, dtype=np.int64)

    cluster_ids = np.unique(labels[labels >= 0])
    points = [ParamPoint.free(p) for p in cloud]
    bases, base_pids = [], []
    for cid in cluster_ids:
        idx = np.flatnonzero(labels == cid)
        pts = cloud[idx]
        try:
            plane, inl = ransac_plane(
                pts, 3.0 * args.delta,
                iters=args.ransac_iters,
                seed=_sub_seed(args.seed, 4, cid),
            )
            basis = select_basis(pts[inl], seed=_sub_seed(args.seed, 5, cid))
        except (DegenerateInputError, ValueError) as e:
            log.warning("cluster %d not fit: %s", cid, e)
            continue
        k = len(bases)
        bases.append(basis)
        base_pids.append(int(cid))
        w = to_barycentric(project_to_plane(pts[inl], basis.plane()), basis)
        for j, wi in zip(idx[inl], w):
            points[j] = ParamPoint.planar(k, wi[0], wi[1])

    state = ReparamState.from_points(points, bases)
    lr_basis = None
    if bases and state.planar_mask.any():
        # basis gradients accumulate a raw sum over members, so the pose
        # step must stay inside 1/sum(|w|^2) for the largest plane
        w12 = state.weights[state.planar_mask]
        w3 = 1.0 - w12[:, 0] - w12[:, 1]
        w2sum = np.zeros(len(bases))
        np.add.at(w2sum, state.plane_id[state.planar_mask],
                  w12[:, 0] ** 2 + w12[:, 1] ** 2 + w3 ** 2)
        lr_basis = min(0.1 * args.lr, 0.25 / max(float(w2sum.max()), 1e-12))
    result = fit_planar_scene(
        state, cloud, iters=args.iters, lr_point=args.lr, lr_basis=lr_basis
    )

    reverted_at = np.zeros(args.iters, dtype=np.int64)
    for it, ids in result.reverted:
        reverted_at[it] = len(ids)
    cum = np.cumsum(reverted_at)
    with open(sc.root / "fit_trace.txt", "w") as f:
        f.write("# iteration loss n_planar n_reverted\n")
        for it in range(args.iters):
            f.write(
                f"{it} {result.loss_trace[it]!r} "
                f"{result.planar_count[it]} {cum[it]}\n"
            )

    final = result.state
    records = []
    for k, basis_pts in enumerate(final.bases):
        basis = PlaneBasis(f1=basis_pts[0], f2=basis_pts[1], f3=basis_pts[2])
        members = np.flatnonzero(final.plane_id == k)
        records.append((base_pids[k], basis.plane(), basis, members))
    formats.write_planes(sc.root / "planes.txt", records)
    formats.write_ply_points(
        sc.root / "cloud_fit.ply",
        final.positions(),
        labels=np.where(
            final.plane_id >= 0,
            np.asarray(base_pids + [0], dtype=np.int64)[
                np.clip(final.plane_id, 0, None)
            ],
            -1,
        ),
    )
    sc.manifest["planes"] = "planes.txt"
    sc.manifest["cloud_fit"] = "cloud_fit.ply"
    sc.manifest.setdefault("params", {}).update(
        {"delta": args.delta, "fit_seed": args.seed, "fit_iters": args.iters}
    )
    scenemod.write_manifest(sc.root, sc.manifest)
    print(
        f"fit: {len(records)} planes, "
        f"{int(final.planar_mask.sum())}/{len(final)} planar points, "
        f"final loss {result.loss_trace[-1]:.3e}, "
        f"{len(result.reverted_ids)} reverted"
    )
    return 0


# ---------------------------------------------------------------------------
# refine
# ---------------------------------------------------------------------------

def _fitted_cloud(sc):
    """Prefer the on-plane fitted cloud when present."""
    if "cloud_fit" in sc.manifest:
        pts, lab = formats.read_ply_points(sc.root / sc.manifest["cloud_fit"])
        return pts, lab
    return sc.cloud, sc.cloud_labels


def cmd_refine(args) -> int:
    sc = scenemod.load_scene(args.scene)
    if not sc.planes:
        raise SceneError(ERR_SCHEMA, "scene has no plane table (run fit)")
    name = args.mesh or ("dense" if "dense" in sc.meshes else "gt")
    mesh = sc.mesh(name)
    cloud, _ = _fitted_cloud(sc)
    if cloud is None:
        raise SceneError(ERR_SCHEMA, "scene has no point cloud")

    plane_points, bases, pids = [], [], []
    for pid, _eq, basis, members in sc.planes:
        if len(members) < 3:
            continue
        plane_points.append(cloud[members])
        bases.append(basis)
        pids.append(pid)
    clusters = assign_vertices(mesh, plane_points, args.delta)
    for c, pid in zip(clusters, pids):
        c.plane_id = pid
    n_before = mesh.n_vertices
    planar_before = int(sum(len(c.vertices) for c in clusters))
    refined = refine_mesh(mesh, clusters, bases, args.delta, args.grid_spacing)

    rel = f"{args.out}.ply"
    formats.write_ply_mesh(sc.root / rel, refined)
    sc.manifest.setdefault("meshes", {})[args.out] = rel
    sc.manifest.setdefault("params", {}).update(
        {"delta": args.delta, "grid_spacing": args.grid_spacing}
    )
    scenemod.write_manifest(sc.root, sc.manifest)
    print(
        f"refine: {name} {n_before} -> {refined.n_vertices} vertices "
        f"({planar_before} planar before), {len(bases)} planes -> {rel}"
    )
    return 0


# ---------------------------------------------------------------------------
# spc
# ---------------------------------------------------------------------------

def _remap_loops(loops, vertex_map):
    out = []
    for lp in loops:
        mapped = np.where(lp >= 0, vertex_map[np.clip(lp, 0, None)], -1)
        if (mapped < 0).any():
            log.warning("contact loop lost %d vertices to a later correction",
                        int((mapped < 0).sum()))
            mapped = mapped[mapped >= 0]
        out.append(mapped)
    return out


def cmd_spc(args) -> int:
    mesh = formats.read_ply_mesh(args.mesh)
    pids = _parse_id_list(args.plane_ids)
    if not pids:
        raise ValueError("at least one plane id is required")

    record_basis = {}
    if args.planes:
        for pid, _eq, basis, _members in formats.read_planes(args.planes):
            record_basis[pid] = basis
    cloud = cloud_labels = None
    if args.cloud:
        cloud, cloud_labels = formats.read_ply_points(args.cloud)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    supports = []
    for pid in pids:
        if mesh.labels is not None and (mesh.labels == pid).any():
            verts = np.flatnonzero(mesh.labels == pid)
        elif cloud is not None and cloud_labels is not None:
            sel = cloud[cloud_labels == pid]
            if len(sel) == 0:
                raise ValueError(f"plane {pid} has no cloud points")
            verts = assign_vertices(mesh, [sel], args.delta)[0].vertices
        else:
            raise ValueError(
                f"plane {pid}: mesh has no vertex labels and no --cloud was given"
            )
        if len(verts) < 3:
            raise ValueError(f"plane {pid} covers fewer than 3 vertices")
        cluster = PlaneVertexCluster(plane_id=pid, vertices=verts)
        basis = record_basis.get(pid)
        if basis is None:
            basis = select_basis(mesh.vertices[verts], seed=_sub_seed(args.seed, 6, pid))
        res = correct_supportive_plane(
            mesh, cluster, basis, args.delta, args.grid_spacing, extent=args.extent
        )
        for prev in supports:
            prev.outer_loop = _remap_loops([prev.outer_loop], res.vertex_map)[0]
            prev.hole_loops = _remap_loops(prev.hole_loops, res.vertex_map)
        supports.append(res)
        mesh = res.mesh
        print(
            f"spc: plane {pid}: outer loop {len(res.outer_loop)} vertices, "
            f"{len(res.hole_loops)} contact holes"
        )

    written = []
    if args.detach:
        scene_mesh, objects = detach_object(mesh, supports)
        formats.write_ply_mesh(out_dir / "scene.ply", scene_mesh)
        written.append("scene.ply")
        for k, obj in enumerate(objects, start=1):
            for sup in supports:
                if _touches_plane(obj, sup.plane, args.delta):
                    obj = seal_contact(obj, sup.plane, args.delta)
            name = f"object_{k}.ply"
            formats.write_ply_mesh(out_dir / name, obj)
            written.append(name)
        print(f"spc: detached {len(objects)} objects")
    else:
        formats.write_ply_mesh(out_dir / "scene.ply", mesh)
        written.append("scene.ply")
    print(f"spc: wrote {', '.join(written)} in {out_dir}")
    return 0


def _touches_plane(obj, plane, delta) -> bool:
    try:
        loops = obj.boundary_loops()
    except ValueError:
        return False
    band = 1.5 * delta
    return any(
        float(np.abs(plane.signed_distance(obj.vertices[lp])).max()) <= band
        for lp in loops
    )


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

EVAL_ORDER = (
    "accuracy", "completion", "precision", "recall", "fscore",
    "fidelity_cm", "completion_cm", "chamfer_cm",
)


def cmd_eval(args) -> int:
    pred_mesh = formats.read_ply_mesh(args.pred)
    gt_mesh = formats.read_ply_mesh(args.gt)
    if args.gt_labels:
        pts, lab = formats.read_ply_points(args.gt_labels)
        if lab is None:
            raise SceneError(ERR_SCHEMA, f"{args.gt_labels} has no plane_id property")
        if len(lab) != gt_mesh.n_vertices:
            raise SceneError(
                ERR_DIMENSION,
                f"dimension mismatch: {len(lab)} labels for "
                f"{gt_mesh.n_vertices} gt vertices",
            )
        gt_mesh.labels = np.asarray(lab, dtype=np.int64)

    pred_cloud = sample_mesh(pred_mesh, args.n, seed=_sub_seed(args.seed, 7))
    gt_cloud = sample_mesh(gt_mesh, args.n, seed=_sub_seed(args.seed, 8))
    sm = scene_metrics(pred_cloud, gt_cloud, tau=args.tau)
    values = {
        "accuracy": sm["acc"],
        "completion": sm["comp"],
        "precision": sm["prec"],
        "recall": sm["recall"],
        "fscore": sm["fscore"],
    }
    if gt_mesh.labels is not None and (gt_mesh.labels >= 0).any():
        k = args.k if args.k > 0 else len(np.unique(gt_mesh.labels[gt_mesh.labels >= 0]))
        pm = planar_metrics(
            pred_mesh,
            gt_mesh,
            k=k,
            n_per_plane=args.n_per_plane,
            seed=args.seed,
            delta=args.delta,
            pred_points=pred_cloud.points,
        )
        values["fidelity_cm"] = pm["fidelity"]
        values["completion_cm"] = pm["completion"]
        values["chamfer_cm"] = pm["chamfer"]

    for name in EVAL_ORDER:
        if name in values:
            print(f"{name:<14} {values[name]:.6f}")
    if args.csv:
        with open(args.csv, "w") as f:
            f.write("metric,value\n")
            for name in EVAL_ORDER:
                if name in values:
                    f.write(f"{name},{values[name]!r}\n")
        print(f"eval: wrote {args.csv}")
    return 0


# ---------------------------------------------------------------------------
# info
# ---------------------------------------------------------------------------

def cmd_info(args) -> int:
    manifest = scenemod.load_manifest(args.scene)
    print(f"scene: {args.scene}")
    print(f"version: {manifest['version']}")
    print(f"views: {len(manifest['views'])}")
    detected = sum(1 for v in manifest["views"] if "plane_mask" in v)
    print(f"plane masks: {detected}")
    for key in ("cloud", "cloud_labeled", "cloud_fit", "planes"):
        if key in manifest:
            print(f"{key}: {manifest[key]}")
    for name, rel in manifest.get("meshes", {}).items():
        print(f"mesh {name}: {rel}")
    params = manifest.get("params", {})
    if params:
        pretty = " ".join(f"{k}={params[k]}" for k in sorted(params))
        print(f"params: {pretty}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_shared(p, *names):
    if "alpha" in names:
        p.add_argument("--alpha", type=float, default=ALPHA_DEFAULT,
                       help="normal-cosine threshold (default 0.98)")
    if "sigma" in names:
        p.add_argument("--sigma", type=int, default=SIGMA_DEFAULT,
                       help="min region pixel area (default 200)")
    if "delta" in names:
        p.add_argument("--delta", type=float, default=DELTA_DEFAULT,
                       help="reconstruction scale delta (default 0.005)")
    if "grid-spacing" in names:
        p.add_argument("--grid-spacing", type=float, default=None,
                       help="plane grid pitch (default max(4*delta, extent/64))")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads; results are identical for any value")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="planekit",
        description="Planar scene reconstruction pipeline: synthesize, detect, "
                    "lift, fit, refine, correct and evaluate.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic scene directory")
    p.add_argument("--out", required=True, help="output scene directory")
    p.add_argument("--views", type=int, default=24)
    p.add_argument("--res", default="320x240", help="image size WxH")
    p.add_argument("--room", default="4x4x3", help="room size WxDxH in meters")
    p.add_argument("--table", action="store_true", help="add a table")
    p.add_argument("--objects", type=int, default=0, help="number of boxes")
    p.add_argument("--cloud-points", type=int, default=20000)
    p.add_argument("--mesh-edge", type=float, default=0.0,
                   help="GT mesh edge length (0 = 2 triangles per rectangle)")
    p.add_argument("--dense-edge", type=float, default=0.0,
                   help="also write a perturbed dense mesh with this edge length")
    p.add_argument("--dense-sigma", type=float, default=0.002,
                   help="normal-direction noise sigma for the dense mesh")
    p.add_argument("--normal-kappa", type=float, default=0.0,
                   help="von Mises-Fisher noise concentration (0 = exact normals)")
    p.add_argument("--mask-erode", type=int, default=0)
    _add_shared(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("detect", help="per-view plane masks from normals")
    p.add_argument("--scene", required=True)
    _add_shared(p, "alpha", "sigma")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("lift", help="lift plane masks to clustered 3D points")
    p.add_argument("--scene", required=True)
    p.add_argument("--resolution", type=float, default=1.0,
                   help="clustering resolution")
    p.add_argument("--min-cluster", type=int, default=30)
    p.add_argument("--max-instance-points", type=int, default=2000)
    p.add_argument("--depth-margin", type=float, default=None,
                   help="use rendered depth for occlusion with this margin")
    _add_shared(p)
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("fit", help="fit plane bases and optimize the cloud")
    p.add_argument("--scene", required=True)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--lr", type=float, default=0.02)
    p.add_argument("--ransac-iters", type=int, default=512)
    _add_shared(p, "delta")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("refine", help="rebuild planar regions of a mesh")
    p.add_argument("--scene", required=True)
    p.add_argument("--mesh", default=None,
                   help="manifest mesh name (default: dense, else gt)")
    p.add_argument("--out", default="refined", help="output mesh name")
    _add_shared(p, "delta", "grid-spacing")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("spc", help="correct supportive planes, detach objects")
    p.add_argument("--mesh", required=True, help="input mesh (PLY)")
    p.add_argument("--plane-ids", required=True, help="comma-separated plane ids")
    p.add_argument("--extent", choices=("outer", "mer"), default="outer")
    p.add_argument("--detach", action="store_true",
                   help="split objects off and seal their contacts")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--planes", default=None, help="plane table (planes.txt)")
    p.add_argument("--cloud", default=None,
                   help="labeled cloud PLY for vertex assignment")
    _add_shared(p, "delta", "grid-spacing")
    p.set_defaults(func=cmd_spc)

    p = sub.add_parser("eval", help="scene and planar metrics")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--gt-labels", default=None,
                   help="PLY with per-vertex plane_id for the GT mesh")
    p.add_argument("--tau", type=float, default=0.05)
    p.add_argument("--k", type=int, default=20,
                   help="number of largest GT planes (0 = all)")
    p.add_argument("--n", type=int, default=200000, help="surface samples")
    p.add_argument("--n-per-plane", type=int, default=10000)
    p.add_argument("--csv", default=None, help="also write metrics CSV")
    _add_shared(p, "delta")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("info", help="print a scene summary")
    p.add_argument("--scene", required=True)
    _add_shared(p)
    p.set_defaults(func=cmd_info)

    return ap


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SceneError as e:
        msg = str(e).replace("\n", " ")
        print(f"error: code={e.code} {msg}", file=sys.stderr)
        return EXIT_CODES.get(e.code, 2)
    except (ValueError, RuntimeError, DegenerateInputError, OSError) as e:
        msg = str(e).replace("\n", " ")
        print(f"error: code=invalid {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
