from .trimesh import (CellMetrics, TriMesh, build_rectangle_mesh, cell_metrics,
                      hanging_nodes, min_angles, tag_interior_segment)
from .refine import refine_marked, refine_uniform
from .transfer import transfer_state

__all__ = ["CellMetrics", "TriMesh", "build_rectangle_mesh", "cell_metrics", "hanging_nodes",
           "min_angles", "refine_marked", "refine_uniform", "tag_interior_segment", "transfer_state"]
