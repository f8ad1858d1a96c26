"""cageforge: semantics-aware cage-based mesh deformation toolkit.

Bind a template triangle mesh to a coarse cage with generalized
barycentric coordinates, annotate parts with measured attributes and
relationships, deform under weighted semantic constraints with a
projective local-global solver, and fit annotated fragments by rigid
then constrained non-rigid alignment.
"""

from .annotation import (
    Annotation,
    Attribute,
    create_annotation,
    measure_bounding,
    measure_ruler,
    measure_tape,
    read_annotations,
    transfer_annotations,
    write_annotations,
)
from .binding import (
    CoordinateMatrix,
    Rotate,
    Stretch,
    Translate,
    annotation_to_cage_vertices,
    apply_deformation,
    compute_gc,
    compute_mvc,
    manipulate_handles,
    read_coords,
    write_coords,
)
from .cagegen import decimate_qem, generate_cage
from .document import Document, Fragment
from .fitting import (
    FitOptions,
    LandmarkSet,
    SimilarityTransform,
    match_landmarks,
    nonrigid_fit,
    rigid_place,
    umeyama_similarity,
)
from .mesh import TriangleMesh, path_length, shortest_edge_path
from .meshio import load_mesh, save_mesh
from .obb import OrientedBoundingBox, compute_obb
from .semgraph import (
    Relationship,
    RelationshipGraph,
    add_relationship,
    extract_structure,
    read_graph,
    write_graph,
)
from .slicing import (
    PlaneSlice,
    approximate_medial_axis,
    slice_by_plane,
    slice_descriptors,
)
from .solver import (
    ResidualReport,
    SolverOptions,
    SolverSession,
    build_session,
    residuals,
    solve,
    withdraw,
)

__version__ = "0.1.0"
