"""Compressive video sensing with split Bregman recovery over learned patch dictionaries."""

from .container import MeasurementSet, read_container, write_container
from .dictlearn import LearnConfig, learn_dictionary
from .keyframe import DivergenceError, KeyRecoveryConfig, init_keyframe, recover_keyframe
from .metrics import psnr, quality_report, ssim
from .nonkey import NonKeyConfig, TemporalContext, recover_nonkey_frame, shrink_double_l1
from .patches import aggregate_patches, extract_patches, make_layout, synthesize_image
from .pipeline import PipelineConfig, decode, desk_config, encode
from .sensing import gen_sensing_matrix, measure_frame
from .sparse import init_dictionary, omp, sparse_code_all
from .video import VideoSequence, load_sequence, save_sequence, split_gop

__version__ = "0.1.0"
