"""estimate-if: instantaneous frequency of a single-line record"""

import argparse

import structlog

from ifkernel.commands.common import add_common_arguments, load_request, parse_pair, read_signal, write_table
from ifkernel.core.errors import EXIT_OK
from ifkernel.core.metrics import stage_timer
from ifkernel.schemas.estimate import HalfwidthMode, IFConfig, PhaseSource
from ifkernel.schemas.kernel import SMOOTHER_SHAPES
from ifkernel.schemas.noise import White
from ifkernel.schemas.requests import EstimateIFRequest
from ifkernel.services.if_estimator import estimate_analytic_noise_variance, estimate_if

logger = structlog.get_logger(__name__)

FIELDS = ("input", "omega0", "frequency_hz", "sample_rate_hz", "phi0", "halfwidth", "auto", "third_derivative",
          "iterations", "tolerance", "phase_source", "shape", "local_recentering", "noise_variance", "ansatz")


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "estimate-if",
        help="estimate the instantaneous frequency φ′(t) of a (t, y) record",
        description="Frequencies are in rad per unit normalized time (the record spans [0, 1)); "
                    "--frequency-hz with --sample-rate-hz converts a physical carrier. Output columns: "
                    "t, if_estimate, amplitude, halfwidth, predicted_loss, edge_flag, low_coherence_flag.",
    )
    add_common_arguments(parser)
    parser.add_argument("--input", "-i", type=str, help="CSV with columns t, y")
    parser.add_argument("--omega0", type=float, help="initial centre frequency")
    parser.add_argument("--frequency-hz", dest="frequency_hz", type=float, help="initial centre frequency in Hz")
    parser.add_argument("--sample-rate-hz", dest="sample_rate_hz", type=float, help="sampling rate in Hz")
    parser.add_argument("--phi0", type=float, help="demodulation phase offset")
    parser.add_argument("--halfwidth", "-H", type=float, help="fixed halfwidth in normalized time")
    parser.add_argument("--auto", action="store_true", help="multistage plug-in halfwidths")
    parser.add_argument("--third-derivative", dest="third_derivative", type=float,
                        help="|∂_t³ e^{iφ̃}| for the fixed-optimal halfwidth")
    parser.add_argument("--iterations", type=int, help="maximum centre-frequency iterations")
    parser.add_argument("--tolerance", type=float, help="centre-frequency convergence tolerance")
    parser.add_argument("--phase-source", dest="phase_source", choices=[s.value for s in PhaseSource])
    parser.add_argument("--shape", choices=[s.value for s in SMOOTHER_SHAPES])
    parser.add_argument("--local-recentering", dest="local_recentering", action="store_true",
                        help="second pass demodulated by the integrated frequency track")
    parser.add_argument("--noise-variance", dest="noise_variance", type=float,
                        help="per-component analytic noise variance (default: first-difference estimate)")
    parser.add_argument("--ansatz", type=parse_pair, help="characteristic amplitude and time scale 'A,tau'")
    parser.set_defaults(handler=run)


def build_config(request: EstimateIFRequest, center_frequency: float) -> IFConfig:
    if request.auto:
        mode = HalfwidthMode.ADAPTIVE
    elif request.halfwidth is not None:
        mode = HalfwidthMode.FIXED
    else:
        mode = HalfwidthMode.OPTIMAL
    return IFConfig(
        initial_center_frequency=center_frequency,
        phase_offset=request.phi0,
        max_center_iterations=request.iterations,
        center_tolerance=request.tolerance,
        halfwidth_mode=mode,
        halfwidth=request.halfwidth,
        third_derivative=request.third_derivative,
        ansatz=request.ansatz,
        kernel_shape=request.shape,
        phase_source=request.phase_source,
        local_recentering=request.local_recentering,
    )


def run(args: argparse.Namespace) -> int:
    if getattr(args, "ansatz", None) is not None and isinstance(args.ansatz, tuple):
        args.ansatz = {"amplitude": args.ansatz[0], "time_scale": args.ansatz[1]}
    request = load_request(EstimateIFRequest, args, FIELDS)
    signal, original_times = read_signal(request.input)
    center_frequency = request.center_frequency(signal.sample_count)
    config = build_config(request, center_frequency)
    sigma2 = request.noise_variance
    if sigma2 is None:
        sigma2 = estimate_analytic_noise_variance(signal, center_frequency, request.phi0)

    with stage_timer("estimate_if") as timing:
        estimate = estimate_if(signal, config, White(sigma2=sigma2))

    frame = estimate.to_frame()
    frame["t"] = original_times
    write_table(frame, request.output, request.output_format)
    logger.info("if_estimation_complete", mode=config.halfwidth_mode.value, sample_count=signal.sample_count,
                center_frequency=estimate.center_frequency, converged=estimate.converged,
                edge_points=int(estimate.edge_flags.sum()), low_coherence_points=int(estimate.low_coherence_flags.sum()),
                processing_time_ms=timing["processing_time_ms"])
    return EXIT_OK
