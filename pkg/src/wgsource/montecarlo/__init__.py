"""Stochastic simulation: quantum-jump trajectories, detector click streams
and the correlation analyses applied to them."""
from .correlate import (CorrelationHistogram, central_ratio, correlate, extract_g2, extract_vraw,
                        fit_bunching_envelope, peak_areas, write_histogram_csv)
from .jumps import JumpEngine, p2_probability, quantum_jump_batch, quantum_jump_pulse
from .streams import ClickStream, apply_deadtime, read_stream, write_stream
from .synth import SourceModel, blink_states, synth_hbt, synth_hom

__all__ = [
    "CorrelationHistogram", "central_ratio", "correlate", "extract_g2", "extract_vraw",
    "fit_bunching_envelope", "peak_areas", "write_histogram_csv",
    "JumpEngine", "p2_probability", "quantum_jump_batch", "quantum_jump_pulse",
    "ClickStream", "apply_deadtime", "read_stream", "write_stream",
    "SourceModel", "blink_states", "synth_hbt", "synth_hom",
]
