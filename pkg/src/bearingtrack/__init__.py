"""Full-spectrum vibration maps and real-time degradation tracking for rolling bearings."""

__version__ = "0.1.0"

from .embed import Embedding2D, TsneConfig, kl_divergence, mds_embed, tsne_embed
from .errors import (BearingTrackError, ConfigError, FormatError, GeometryError, NumericError,
                     ParseError, SequenceError, SizeError, ValidationError)
from .ingest import (RawRecording, RecordingSet, SynthConfig, enumerate_recordings, format_ims,
                     load_ims_directory, parse_ims_file, synth_run_to_failure)
from .preprocess import (PreprocessConfig, SpectrumVector, dft_magnitude, hann_window,
                         preprocess_recording, preprocess_set, smooth)
from .rtdt import (AlertEvent, AlertState, ReferenceMap, TrackedPoint, build_reference_map,
                   plot_point, track_stream, update_alert, warning_factor)
from .similarity import DistanceMatrix, distance, distance_matrix
from .render import MapFigureSpec, render_map, render_rho_curve

__all__ = [
    "AlertEvent", "AlertState", "BearingTrackError", "ConfigError", "DistanceMatrix", "Embedding2D",
    "FormatError", "GeometryError", "MapFigureSpec", "NumericError", "ParseError", "PreprocessConfig",
    "RawRecording", "RecordingSet", "ReferenceMap", "SequenceError", "SizeError", "SpectrumVector",
    "SynthConfig", "TrackedPoint", "TsneConfig", "ValidationError", "build_reference_map",
    "dft_magnitude", "distance", "distance_matrix", "enumerate_recordings", "format_ims", "hann_window",
    "kl_divergence", "load_ims_directory", "mds_embed", "parse_ims_file", "plot_point",
    "preprocess_recording", "preprocess_set", "render_map", "render_rho_curve", "smooth",
    "synth_run_to_failure", "track_stream", "tsne_embed", "update_alert", "warning_factor",
]
