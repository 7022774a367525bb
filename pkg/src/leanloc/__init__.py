"""leanloc: lean-image geo-localization benchmark pipeline.

Renders edge / facade / depth images of an untextured city model over a 4D
camera-pose grid, applies validity and label protocols, and scores pose
predictions with grid-based retrieval and interpolation metrics.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    DataIntegrityError,
    EmptyModelError,
    LeanlocError,
    MeshParseError,
)
from .pose import (
    AOI,
    Pose,
    PoseLabel,
    Quaternion,
    label_to_pose,
    pose_to_label,
    quat_angular_distance,
    quat_to_yaw_pitch,
    yaw_pitch_to_quat,
)
from .raster import (
    CameraIntrinsics,
    EdgeImage,
    LeanTriplet,
    ray_cast_depth,
    render_depth,
    render_edges,
    render_faces,
    render_triplet,
)
from .scene import (
    Footprint,
    SceneModel,
    SynthCityConfig,
    is_inside_building,
    load_mesh,
    synth_city,
    write_mesh,
)
from .sampler import (
    GridIndex,
    GridSpec,
    SampleRecord,
    check_validity,
    enumerate_grid,
    midpoint_grid,
    shuffle_labels,
    split_validation,
)
from .dataset import (
    Manifest,
    PredictionSet,
    read_manifest,
    read_predictions,
    stack_channels,
    write_dataset,
    write_predictions,
)
from .evaluation import (
    EvalReport,
    HeatmapGrid,
    cube_of,
    grid_distance,
    heatmap,
    interpolation_report,
    l2_report,
    manhattan_cell_distance,
    matching_report,
    rank_of_truth,
)
