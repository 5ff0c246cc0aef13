"""parse-urdf, fk, ik, graph-dump and gradcheck."""
from pathlib import Path

import numpy as np

from commands.common import emit, floats
from helpers.autodiff import primitive_suite
from helpers.errors import IoError, UsageError
from helpers.kinematics import IkOptions, bimanual_poses, ik_solve
from helpers.st_graph import build_spatial_graph, build_st_graph, normalized_adjacency, workspace_around
from helpers.urdf import DEFAULT_LEFT_PREFIX, DEFAULT_RIGHT_PREFIX, arm_chain, load_model, model_summary, parse_urdf, validate_model
from models.enums import ArmLabel
from models.pose import Pose


def _pose(pose: Pose) -> dict:
    return {"position": list(pose.position), "orientation": list(pose.orientation)}


def parse_urdf_command(args) -> int:
    try:
        text = Path(args.file).read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read {args.file}: {e}")
    model = parse_urdf(text, args.left_prefix, args.right_prefix)
    report = validate_model(model)
    findings = {"ok": report.ok, "findings": [finding.model_dump(mode="json") for finding in report.findings]}
    if args.json:
        emit({"model": model.model_dump(mode="json"), "report": findings})
    else:
        emit({"summary": model_summary(model), "report": findings})
    return 0


def fk_command(args) -> int:
    model = load_model(args.model)
    left, right = bimanual_poses(model, floats(args.theta, "--theta"))
    emit({"model": model.name, "left": _pose(left), "right": _pose(right)})
    return 0


def ik_command(args) -> int:
    model = load_model(args.model)
    chain = arm_chain(model, ArmLabel(args.arm))
    values = floats(args.target, "--target")
    if len(values) != 7:
        raise UsageError(f"--target needs x,y,z,qw,qx,qy,qz, got {len(values)} values")
    target = Pose(position=tuple(values[:3]), orientation=tuple(values[3:]))
    if args.init:
        init = floats(args.init, "--init")
    else:
        init = np.random.default_rng(args.seed).uniform(
            [j.limits.lower for j in chain.joints], [j.limits.upper for j in chain.joints]
        ) if args.seed is not None else np.zeros(len(chain))
    opts = IkOptions(max_iters=args.max_iters)
    solution = ik_solve(chain, target, init, opts)
    emit({"model": model.name, "arm": args.arm, "joints": [j.name for j in chain.joints], "theta": list(solution.values)})
    return 0


def graph_dump_command(args) -> int:
    model = load_model(args.model)
    theta = floats(args.theta, "--theta")
    workspace = workspace_around(model)
    slices = [build_spatial_graph(model, theta, workspace) for _ in range(args.history + 1)]
    graph = build_st_graph(slices, args.all_pairs)
    emit(
        {
            "model": model.name,
            **graph.summary(),
            "edge_list": [list(edge) for edge in graph.edges],
            "features": graph.features,
            "adjacency": graph.adjacency(),
            "normalized_adjacency": normalized_adjacency(graph.num_nodes, graph.edges),
        }
    )
    return 0


def gradcheck_command(args) -> int:
    errors = primitive_suite(seed=args.seed, points=args.points)
    worst = max(errors, key=errors.get)
    emit({"seed": args.seed, "max_errors": errors, "worst": worst, "worst_error": errors[worst]})
    return 0


def register(subparsers) -> None:
    p = subparsers.add_parser("parse-urdf", help="validate a URDF file and summarize its arms")
    p.add_argument("file")
    p.add_argument("--left-prefix", default=DEFAULT_LEFT_PREFIX)
    p.add_argument("--right-prefix", default=DEFAULT_RIGHT_PREFIX)
    p.add_argument("--json", action="store_true", help="emit the full parsed model instead of its summary")
    p.set_defaults(handler=parse_urdf_command)

    p = subparsers.add_parser("fk", help="both end-effector poses at a configuration")
    p.add_argument("model", help="built-in model name or URDF path")
    p.add_argument("--theta", required=True)
    p.set_defaults(handler=fk_command)

    p = subparsers.add_parser("ik", help="solve one arm to a target pose")
    p.add_argument("model")
    p.add_argument("--arm", choices=[label.value for label in ArmLabel], required=True)
    p.add_argument("--target", required=True, help="x,y,z,qw,qx,qy,qz")
    p.add_argument("--init", help="initial joint values of the arm")
    p.add_argument("--seed", type=int, help="random in-limit initial guess when --init is absent")
    p.add_argument("--max-iters", type=int, default=IkOptions().max_iters)
    p.set_defaults(handler=ik_command)

    p = subparsers.add_parser("graph-dump", help="spatial-temporal joint graph as JSON")
    p.add_argument("model")
    p.add_argument("--theta", required=True)
    p.add_argument("--history", type=int, default=2)
    p.add_argument("--all-pairs", action="store_true", help="temporal edges between every pair of slices")
    p.set_defaults(handler=graph_dump_command)

    p = subparsers.add_parser("gradcheck", help="finite-difference check of every tape primitive")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points", type=int, default=10)
    p.set_defaults(handler=gradcheck_command)
