"""planekit: planar scene reconstruction toolkit.

Pipeline: per-view plane detection from normal maps, multi-view lifting
into clustered 3D points, barycentric plane fitting with dynamic
reclassification, plane-guided mesh refinement, supportive-plane
correction with object detachment, and reconstruction metrics.
"""

__version__ = "0.1.0"

from .geom2d import (
    DegenerateInputError,
    OccupancyGrid,
    PlaneFrame,
    Rect2,
    Tri2Mesh,
    build_occupancy,
    convex_hull,
    delaunay,
    min_enclosing_rect,
)
from .hashgrid import HashGrid
from .lifting import (
    CameraView,
    CoplanarityGraph,
    PlanePartition,
    accumulate_edges,
    leiden_partition,
    lift_scene,
    modularity,
    occlusion_filter,
    project_points,
)
from .mesh import TriMesh, concatenate, merge_duplicate_vertices
from .metrics import (
    SampledCloud,
    nearest_distances,
    planar_metrics,
    point_mesh_distance,
    sample_mesh,
    scene_metrics,
)
from .optim import (
    DgrSchedule,
    FitResult,
    GradStats,
    ParamPoint,
    ReparamState,
    dgr_active,
    dgr_select,
    fit_planar_scene,
    optimize_step,
)
from .perception import (
    MaskSet,
    NormalMap,
    PlaneMaskImage,
    PlaneProposal,
    detect_planes_in_mask,
    detect_view_planes,
    kmeans,
    merge_proposals,
    region_similarity,
)
from .planefit import (
    PlaneBasis,
    PlaneEq,
    fit_plane_lsq,
    from_barycentric,
    project_to_plane,
    ransac_plane,
    select_basis,
    to_barycentric,
)
from .refine import (
    PlaneVertexCluster,
    assign_vertices,
    classify_boundary_interior,
    refine_mesh,
    refine_plane_region,
    region_frame,
)
from .scene import Scene, SceneError, load_scene, save_scene
from .spc import (
    SupportResult,
    classify_loops,
    correct_supportive_plane,
    detach_object,
    extract_loops,
    seal_contact,
)
from .synth import (
    DeskScene,
    SceneBundle,
    SceneRect,
    SceneSpec,
    build_desk_scene,
    build_scene,
    perturb_dense_mesh,
    render_view,
    ring_cameras,
    sample_surface,
)
