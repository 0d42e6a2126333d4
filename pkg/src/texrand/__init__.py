"""texrand: randomized-texture synthetic scene rendering and BOP-style
detection / 6D-pose evaluation."""

__version__ = "0.1.0"

from .assets import (ObjectModel, RigidTransform, TextureImage, TriMesh, UvChart,
                     compute_diameter, load_mesh, load_model_set, load_symmetries,
                     load_texture, load_texture_bank, triplanar_uv)
from .augment import (AugOpSpec, AugPipeline, Corruption, apply_augmentation,
                      apply_corruption, apply_pipeline)
from .bop import (CameraRecord, DetectionRecord, FrameData, GtInfoRecord, GtRecord,
                  PoseCsvRow, read_pose_csv, read_scene, write_pose_csv, write_scene)
from .bvh import Bvh, build_bvh_from_corners
from .compose import (CameraSample, ComposeConfig, LightSample, ObjectInstance,
                      SceneSpec, compose_scene, plan_dataset, sample_camera_shell)
from .detect_metrics import DetBox, iou, map_coco
from .pose_metrics import (MetricConfig, MetricReport, PoseHypothesis, PoseTarget,
                           average_recall, mspd, mssd, vsd)
from .render import (RenderFrame, ShadingParams, build_bvh, pack_scene, project,
                     render_frame, render_object_depth)
from .streams import (MaterialSample, RngStream, SamplingMode, derive_stream,
                      sample_material, sample_texture_assignment)
