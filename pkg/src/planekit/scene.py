"""Scene directories.

One directory holds one scene: a manifest.json naming every asset, a
cameras.txt, per-view normal/depth/mask images, optional point clouds,
plane tables and meshes.  Loading validates existence, manifest schema
and cross-file dimensions, and reports failures with distinct codes so
callers can map them to distinct exit codes.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import formats
from .perception import PlaneMaskImage

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"

ERR_MISSING = "missing_file"
ERR_SCHEMA = "schema"
ERR_DIMENSION = "dimension"
ERR_PARSE = "parse"


class SceneError(Exception):
    """Scene loading failure with a machine-readable code."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class Scene:
    """A loaded scene directory.

    views carry depth and plane_mask attached when present, so they can be
    handed straight to the lifting stage.  meshes maps logical names to
    paths and is loaded lazily through mesh().
    """

    root: Path
    manifest: dict
    views: list
    normals: list          # NormalMap or None per view
    depths: list           # (H, W) float or None per view
    masks: list            # (H, W) int instance ids or None per view
    plane_masks: list      # PlaneMaskImage or None per view
    cloud: np.ndarray | None = None
    cloud_labels: np.ndarray | None = None
    planes: list = field(default_factory=list)
    meshes: dict = field(default_factory=dict)

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def params(self) -> dict:
        return self.manifest.get("params", {})

    def mesh(self, name: str):
        if name not in self.meshes:
            raise SceneError(ERR_MISSING, f"missing file: mesh '{name}' not in manifest")
        return _read(formats.read_ply_mesh, self.root / self.meshes[name])


def _read(reader, path: Path):
    if not path.is_file():
        raise SceneError(ERR_MISSING, f"missing file: {path}")
    try:
        return reader(path)
    except ValueError as e:
        raise SceneError(ERR_PARSE, f"parse error in {path}: {e}") from e


def _require(manifest: dict, key: str, kind):
    if key not in manifest:
        raise SceneError(ERR_SCHEMA, f"manifest missing required key '{key}'")
    if not isinstance(manifest[key], kind):
        raise SceneError(
            ERR_SCHEMA, f"manifest key '{key}' must be {kind.__name__}"
        )
    return manifest[key]


def load_manifest(root) -> dict:
    root = Path(root)
    path = root / MANIFEST_NAME
    if not path.is_file():
        raise SceneError(ERR_MISSING, f"missing file: {path}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise SceneError(ERR_SCHEMA, f"manifest is not valid JSON: {e}") from e
    if not isinstance(manifest, dict):
        raise SceneError(ERR_SCHEMA, "manifest root must be a JSON object")
    _require(manifest, "version", int)
    _require(manifest, "cameras", str)
    views = _require(manifest, "views", list)
    for i, entry in enumerate(views):
        if not isinstance(entry, dict):
            raise SceneError(ERR_SCHEMA, f"manifest views[{i}] must be an object")
    return manifest


def write_manifest(root, manifest: dict) -> None:
    path = Path(root) / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_scene(root) -> Scene:
    """Load and validate a scene directory.

    Raises SceneError with code missing_file, schema, dimension or parse.
    """
    from .perception import NormalMap

    root = Path(root)
    manifest = load_manifest(root)

    views = _read(formats.read_cameras, root / manifest["cameras"])
    entries = manifest["views"]
    if len(views) != len(entries):
        raise SceneError(
            ERR_DIMENSION,
            f"dimension mismatch: {len(views)} camera records for "
            f"{len(entries)} manifest views",
        )

    normals, depths, masks, plane_masks = [], [], [], []
    for i, (view, entry) in enumerate(zip(views, entries)):
        shape = (view.height, view.width)
        nm = dm = mk = pm = None
        if "normal" in entry:
            data = _read(formats.read_pfm, root / entry["normal"])
            if data.ndim != 3 or data.shape[:2] != shape:
                raise SceneError(
                    ERR_DIMENSION,
                    f"dimension mismatch: view {i} normal map "
                    f"{data.shape} vs camera {shape}",
                )
            try:
                nm = NormalMap(data=np.asarray(data, dtype=np.float64))
            except ValueError as e:
                raise SceneError(ERR_PARSE, f"parse error in {entry['normal']}: {e}") from e
        if "depth" in entry:
            dm = _read(formats.read_pfm, root / entry["depth"])
            if dm.shape != shape:
                raise SceneError(
                    ERR_DIMENSION,
                    f"dimension mismatch: view {i} depth map "
                    f"{dm.shape} vs camera {shape}",
                )
            view.depth = np.asarray(dm, dtype=np.float64)
        if "mask" in entry:
            mk = _read(formats.read_pgm, root / entry["mask"])
            if mk.shape != shape:
                raise SceneError(
                    ERR_DIMENSION,
                    f"dimension mismatch: view {i} mask "
                    f"{mk.shape} vs camera {shape}",
                )
        if "plane_mask" in entry:
            labels = _read(formats.read_pgm, root / entry["plane_mask"])
            if labels.shape != shape:
                raise SceneError(
                    ERR_DIMENSION,
                    f"dimension mismatch: view {i} plane mask "
                    f"{labels.shape} vs camera {shape}",
                )
            pm = PlaneMaskImage(labels=labels)
            view.plane_mask = pm
        normals.append(nm)
        depths.append(dm)
        masks.append(mk)
        plane_masks.append(pm)

    cloud = cloud_labels = None
    cloud_key = "cloud_labeled" if "cloud_labeled" in manifest else "cloud"
    if cloud_key in manifest:
        cloud, cloud_labels = _read(formats.read_ply_points, root / manifest[cloud_key])

    planes = []
    if "planes" in manifest:
        planes = _read(formats.read_planes, root / manifest["planes"])
        if cloud is not None:
            top = max((int(m.max(initial=-1)) for _, _, _, m in planes), default=-1)
            if top >= len(cloud):
                raise SceneError(
                    ERR_DIMENSION,
                    f"dimension mismatch: plane member index {top} "
                    f"exceeds cloud of {len(cloud)} points",
                )

    meshes = dict(manifest.get("meshes", {}))
    return Scene(
        root=root,
        manifest=manifest,
        views=views,
        normals=normals,
        depths=depths,
        masks=masks,
        plane_masks=plane_masks,
        cloud=cloud,
        cloud_labels=cloud_labels,
        planes=planes,
        meshes=meshes,
    )


def save_scene(
    root,
    views,
    renders=None,
    cloud=None,
    cloud_labels=None,
    params=None,
    meshes=None,
) -> dict:
    """Write a scene directory from scratch and return its manifest.

    renders: per-view objects with normals/depth/masks attributes (or None).
    meshes: dict name -> TriMesh.
    """
    root = Path(root)
    (root / "views").mkdir(parents=True, exist_ok=True)

    formats.write_cameras(root / "cameras.txt", views)
    entries = []
    for i in range(len(views)):
        entry = {"id": i}
        if renders is not None:
            rv = renders[i]
            entry["normal"] = f"views/normal_{i:03d}.pfm"
            entry["depth"] = f"views/depth_{i:03d}.pfm"
            entry["mask"] = f"views/mask_{i:03d}.pgm"
            formats.write_pfm(root / entry["normal"], rv.normals.data)
            formats.write_pfm(root / entry["depth"], rv.depth)
            formats.write_pgm(root / entry["mask"], rv.masks.labels)
        entries.append(entry)

    manifest = {"version": 1, "cameras": "cameras.txt", "views": entries}
    if params:
        manifest["params"] = dict(params)
    if cloud is not None:
        manifest["cloud"] = "cloud.ply"
        formats.write_ply_points(root / "cloud.ply", cloud, labels=cloud_labels)
    if meshes:
        manifest["meshes"] = {}
        for name, mesh in meshes.items():
            rel = f"{name}.ply"
            manifest["meshes"][name] = rel
            formats.write_ply_mesh(root / rel, mesh)
    write_manifest(root, manifest)
    return manifest
