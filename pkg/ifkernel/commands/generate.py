"""generate: synthesize a noisy record with a ground-truth sidecar"""

import argparse

import pandas as pd
import structlog

from ifkernel.commands.common import add_common_arguments, load_request, write_table
from ifkernel.core.errors import EXIT_OK
from ifkernel.core.io import write_json
from ifkernel.schemas.noise import White
from ifkernel.schemas.requests import GenerateRequest
from ifkernel.services.signal_lab import generate

logger = structlog.get_logger(__name__)

TONE_FLAGS = {
    "omega0": "center_frequency",
    "phi0": "phase_offset",
    "amplitude": "amplitude",
    "phase_kind": "phase_kind",
    "chirp_rate": "chirp_rate",
    "fm_index": "fm_index",
    "fm_rate": "fm_rate",
}


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "generate",
        help="generate a synthetic record (t, y) plus a JSON ground-truth sidecar",
        description="Samples lie at t_j = j/N. Frequencies are in rad per unit normalized time. "
                    "Several tones, amplitude modulation or colored noise need --config.",
    )
    add_common_arguments(parser)
    parser.add_argument("--sample-count", dest="sample_count", type=int, help="number of samples N")
    parser.add_argument("--noise-variance", dest="noise_variance", type=float, help="white noise variance σ²")
    parser.add_argument("--omega0", type=float, help="tone centre frequency")
    parser.add_argument("--phi0", type=float, help="tone phase offset")
    parser.add_argument("--amplitude", type=float, help="tone amplitude")
    parser.add_argument("--phase-kind", dest="phase_kind", choices=["tone", "chirp", "fm"])
    parser.add_argument("--chirp-rate", dest="chirp_rate", type=float, help="β in φ = ω_o t + βt²/2")
    parser.add_argument("--fm-index", dest="fm_index", type=float, help="m in φ = ω_o t + m·sin(rt)")
    parser.add_argument("--fm-rate", dest="fm_rate", type=float, help="r in φ = ω_o t + m·sin(rt)")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    tone = {field: getattr(args, flag) for flag, field in TONE_FLAGS.items() if getattr(args, flag, None) is not None}
    if tone:
        args.tones = [tone]
    if getattr(args, "noise_variance", None) is not None:
        args.noise = White(sigma2=args.noise_variance).model_dump()
    request = load_request(GenerateRequest, args, ("tones", "sample_count", "noise"))

    signal, truth = generate(request.tones, request.sample_count, request.noise, request.seed)
    frame = pd.DataFrame({"t": signal.times, "y": signal.values})
    path = write_table(frame, request.output, request.output_format)
    sidecar = write_json({"seed": request.seed, **truth.to_dict()}, path.with_suffix(".truth.json"))
    logger.info("record_generated", output=str(path), truth=str(sidecar), sample_count=request.sample_count,
                tones=len(request.tones))
    return EXIT_OK
