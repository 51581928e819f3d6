"""Driven-transmon simulation: gates, echoed cross resonance, RB and spin echo."""

from .cr import calibrate_control_pi, cr_error_sweep, cr_pulse, echoed_cr, zx_rate_hz
from .evolve import StepSizeError, evolve, propagate
from .fidelity import average_gate_fidelity, rotation_angle, zx
from .gates import (CalibrationError, RfDacSynthesis, UpconversionSynthesis, calibrate_amplitude,
                    calibrate_through_chain, run_gate_through_chain, synthesize)
from .models import DriveSignal, GateResult, TransmonModel, TwoQubitModel, write_sweep_csv
from .sequences import clifford_group, rb_single_qubit, simulated_gate_set, spin_echo

__all__ = [
    "CalibrationError", "DriveSignal", "GateResult", "RfDacSynthesis", "StepSizeError", "TransmonModel",
    "TwoQubitModel", "UpconversionSynthesis", "average_gate_fidelity", "calibrate_amplitude",
    "calibrate_control_pi", "calibrate_through_chain", "clifford_group", "cr_error_sweep", "cr_pulse",
    "echoed_cr", "evolve", "propagate", "rb_single_qubit", "rotation_angle", "run_gate_through_chain",
    "simulated_gate_set", "spin_echo", "synthesize", "write_sweep_csv", "zx", "zx_rate_hz",
]
