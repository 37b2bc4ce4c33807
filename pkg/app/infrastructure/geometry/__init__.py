"""Camera geometry and scene flow."""
from app.infrastructure.geometry.camera import pixel_grid, project, ray_directions, unproject
from app.infrastructure.geometry.flow import flow_from_poses, flow_to_rgb, warp_by_flow
from app.infrastructure.geometry.depth_alignment import align_scale_shift

__all__ = [
    "pixel_grid",
    "project",
    "ray_directions",
    "unproject",
    "flow_from_poses",
    "flow_to_rgb",
    "warp_by_flow",
    "align_scale_shift",
]
