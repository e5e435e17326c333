"""Symbol-level precoding and reflection design for IRS-based passive
information transmission: channel models, constructive-interference
max-min designs (continuous and low-resolution), joint precoder/reflection
optimization, and Monte Carlo SER evaluation."""

from .channel import (ChannelSet, LinkSpec, ScenarioConfig, channels_from_csv,
                      channels_to_csv, compound_channel_joint, draw_channels,
                      draw_rician, effective_channel_standalone,
                      effective_channels, joint_scenario, path_loss,
                      standalone_scenario, steering_vector)
from .geometry import (CapacityError, CoefficientBundle, PskConstellation,
                       SymbolBook, build_coefficients_joint,
                       build_coefficients_standalone, ci_distance,
                       enumerate_symbol_vectors, make_constellation, rotate)
from .manifold import (RcgOptions, RcgResult, RetractionError, lse_objective,
                       project_tangent, random_circle_point, rcg_minimize,
                       retract, save_trace_csv)
from .discrete import (BnbResult, PhaseGrid, branch_and_bound,
                       coordinate_refine, make_phase_grid, quantize)
from .passive import (PassiveDesignResult, PassiveOptions, design_power_min,
                      design_qos_balance, margins_to_csv, parse_strategy,
                      summary_to_json)
from .joint import (InfeasibleDesignError, JointDesignResult, JointOptions,
                    PrecoderBook, allocate_power, compound_all,
                    eval_joint_margins, joint_power_min, joint_qos_balance,
                    joint_summary_json, joint_trace_csv, min_norm_qp,
                    reflections_to_csv, solve_precoder_pm, solve_reflection)
from .simulate import (SerResult, detect_psk, detect_sir, psk_ser_awgn,
                       run_ser, ser_to_csv, simulate_awgn_psk)
from .units import db_to_linear, dbm_to_watts, linear_to_db, watts_to_dbm

__version__ = "0.1.0"
