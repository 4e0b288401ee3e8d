"""design-kernel: build a kernel by one of the design paths and write its weights"""

import argparse

import numpy as np
import pandas as pd
import structlog

from ifkernel.commands.common import add_common_arguments, load_request, write_table
from ifkernel.core.errors import EXIT_OK
from ifkernel.core.io import write_json
from ifkernel.core.metrics import stage_timer
from ifkernel.schemas.kernel import SMOOTHER_SHAPES, Kernel
from ifkernel.schemas.noise import White
from ifkernel.schemas.requests import DesignKernelRequest
from ifkernel.services.kernel_design import (
    design_boundary_kernel,
    design_minimal_loss_kernel,
    design_minimal_variance_kernel,
    design_optimal_kernel,
    legendre_kernel,
    sinusoidal_taper_kernel,
)

logger = structlog.get_logger(__name__)

FIELDS = ("method", "q", "p", "grid_count", "halfwidth", "curvature", "noise", "estimation_point",
          "sample_count", "shape")


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "design-kernel",
        help="design a (q,p) kernel and write its weights",
        description="Offsets s = (t − t_j)/h lie on a uniform grid over [−1, 1] except for boundary "
                    "designs, which use the record t_j = j/N. Output JSON carries q, p, h, weights, "
                    "offsets, C_qp and m2 plus the design method, shape and moment residual.",
    )
    add_common_arguments(parser)
    parser.add_argument("--method", choices=["minimal_variance", "minimal_loss", "optimal", "legendre", "taper",
                                             "boundary"])
    parser.add_argument("--q", type=int, help="derivative order")
    parser.add_argument("--p", type=int, help="first free moment")
    parser.add_argument("--grid-count", dest="grid_count", type=int, help="number of offsets")
    parser.add_argument("--halfwidth", type=float, help="halfwidth h in normalized time")
    parser.add_argument("--curvature", type=float, help="|∂_t^p g| for the minimal-loss design")
    parser.add_argument("--noise-variance", dest="noise_variance", type=float, help="white noise variance σ²")
    parser.add_argument("--estimation-point", dest="estimation_point", type=float, help="t for boundary designs")
    parser.add_argument("--sample-count", dest="sample_count", type=int, help="record length N for boundary designs")
    parser.add_argument("--shape", choices=[s.value for s in SMOOTHER_SHAPES], help="boundary kernel shape")
    parser.set_defaults(handler=run)


def build_kernel(request: DesignKernelRequest) -> Kernel:
    order = request.order
    offsets = np.linspace(-1.0, 1.0, request.grid_count)
    nh = (request.grid_count - 1) / 2.0
    if request.method == "minimal_variance":
        return design_minimal_variance_kernel(order, offsets, request.halfwidth, nh, covariance=request.noise)
    if request.method == "minimal_loss":
        return design_minimal_loss_kernel(order, offsets, request.noise, request.curvature, request.halfwidth, nh)
    if request.method == "optimal":
        return design_optimal_kernel(order, offsets, request.halfwidth, nh)
    if request.method == "legendre":
        return legendre_kernel(order, request.halfwidth, request.grid_count)
    if request.method == "taper":
        return sinusoidal_taper_kernel(order, request.grid_count)
    times = np.arange(request.sample_count) / request.sample_count
    return design_boundary_kernel(order, request.estimation_point, request.halfwidth, times, request.shape)


def run(args: argparse.Namespace) -> int:
    if getattr(args, "noise_variance", None) is not None:
        args.noise = White(sigma2=args.noise_variance).model_dump()
    request = load_request(DesignKernelRequest, args, FIELDS)

    with stage_timer("design_kernel") as timing:
        kernel = build_kernel(request)

    logger.info("kernel_designed", method=request.method, order=str(kernel.order), points=kernel.weights.size,
                m2=kernel.m2, c_qp=kernel.c_qp, processing_time_ms=timing["processing_time_ms"])
    if request.output_format == "json":
        write_json(
            {
                "q": kernel.order.q,
                "p": kernel.order.p,
                "h": kernel.halfwidth,
                "weights": kernel.weights,
                "offsets": kernel.offsets,
                "C_qp": kernel.c_qp,
                "m2": kernel.m2,
                "method": request.method,
                "shape": kernel.shape.value,
                "nh": kernel.nh,
                "moment_residual": kernel.moment_residual(),
            },
            request.output,
        )
    else:
        frame = pd.DataFrame({"offset": kernel.offsets, "lag": kernel.lags, "weight": kernel.weights})
        write_table(frame, request.output, "csv")
    return EXIT_OK
