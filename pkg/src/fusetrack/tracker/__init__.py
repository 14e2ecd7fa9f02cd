from .kcf import FilterModel, ResponseMap, compute_pce, detect, train_filter
from .scale import fuse_scale, scale_from_3d
from .tracker import TrackerParams, TrackerState, init_tracker, track_frame, update_model
