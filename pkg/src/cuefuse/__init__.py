"""Keypoint-driven cue sampling and score-level multi-cue fusion for isolated sign recognition."""

__version__ = "0.1.0"

from .errors import (BoundsError, ConfigError, CuefuseError, DuplicateError, EmptyError,
                     FaceNotFound, InvalidRange, IoError, NoHandsVisible, NoMovement,
                     ParseError, SchemaError, ShapeError, TrainError, WeightError, WindowError)
from .evaluation import (AblationTable, EvalReport, Prediction, ablation_effects, accuracy,
                         attribute_accuracy, evaluate, per_gloss_f1, topn_curve)
from .fusion import CueScores, FusionSpec, fuse_matrices, fuse_mean, fuse_weighted, predict, softmax
from .pose_io import (FramePose, Keypoint2D, Manifest, ScoreMatrix, VideoPose, parse_manifest,
                      parse_video_pose, read_scores, write_scores)
from .sampling import (ActiveWindow, CropPlan, CropRegion, HandActivity, Image, SamplingConfig,
                       bilinear_resize, compute_active_window, concat_horizontal, crop,
                       detect_moving_hands, plan_body_crop, plan_face_crop, plan_hand_crop,
                       select_active_hand, uniform_sample)
from .toy import CentroidModel, CueFeatures, SynthSpec, extract_features, fit_centroids, generate_synthetic, score
