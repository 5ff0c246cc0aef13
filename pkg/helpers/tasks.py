"""Desk-scale bimanual tasks on the planar model.

Objects live in the XY plane. The environment is purely kinematic: joints
track their targets at a bounded rate, grippers latch objects on an
open-to-closed transition next to a handle, and each task has its own
success rule.
"""
import logging
from functools import lru_cache
from typing import Callable, Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from helpers.collision import self_collision_check
from helpers.errors import ExpertFailed, KStarError, NoConvergence, Unreachable
from helpers.keyframes import keyframe_discovery
from helpers.kinematics import IkOptions, arm_theta, chain_indices, fk_all, ik_solve
from helpers.urdf import arm_chain, builtin_model
from models.config import RolloutOptions
from models.demos import Demonstration, Observation, StepRecord, instruction_id
from models.enums import ArmLabel, TaskName
from models.pose import JointConfiguration, Pose, PoseVector
from models.reports import EpisodeResult
from models.robot import RobotModel
from models.tasks import EnvState, Point2, TaskSpec

logger = logging.getLogger(__name__)

MAX_JOINT_STEP = 0.15
GRASP_RADIUS = 0.03
OPEN = 1.0
CLOSED = 0.0
ARRIVAL_TOL = 1e-6

LIFT_HANDLE_OFFSET = 0.12
LIFT_HEIGHT = 0.10
LIFT_RAISE = 0.12
LIFT_HOLD_STEPS = 3
HANDOVER_HANDLE_OFFSET = 0.04
PUSH_CONTACT = 0.04
PUSH_DISTANCE = 0.12
PUSH_APPROACH = 0.06
PUSH_FOLLOW_THROUGH = 0.08

HOME_TIPS = {ArmLabel.LEFT: (-0.20, 0.30), ArmLabel.RIGHT: (0.20, 0.30)}
HOME_SEEDS = {ArmLabel.LEFT: (2.7, -1.9, -0.8), ArmLabel.RIGHT: (0.44, 1.9, 0.8)}

TASKS: Dict[TaskName, TaskSpec] = {
    TaskName.LIFT_PLATE: TaskSpec(
        name=TaskName.LIFT_PLATE,
        step_budget=60,
        object_ranges=((-0.03, 0.03), (0.26, 0.34)),
    ),
    TaskName.HANDOVER: TaskSpec(
        name=TaskName.HANDOVER,
        step_budget=120,
        object_ranges=((-0.16, -0.10), (0.26, 0.34), (0.12, 0.18), (0.26, 0.34)),
    ),
    TaskName.PUSH_BOX: TaskSpec(
        name=TaskName.PUSH_BOX,
        success_pos_tol=0.04,
        step_budget=50,
        object_ranges=((0.06, 0.10), (0.26, 0.34)),
    ),
}

ActionSource = Callable[[Tuple[Observation, ...]], PoseVector]


def task_spec(name) -> TaskSpec:
    return TASKS[TaskName(name)]


def task_model(spec: TaskSpec) -> RobotModel:
    return builtin_model(spec.model_name)


@lru_cache(maxsize=8)
def home_configuration(model_name: str) -> Tuple[float, ...]:
    """Both tips at their home points, gripper frames at yaw 0."""
    model = builtin_model(model_name)
    theta = np.zeros(model.dof)
    for label in ArmLabel:
        target = Pose(position=(*HOME_TIPS[label], 0.0))
        solution = ik_solve(arm_chain(model, label), target, HOME_SEEDS[label], IkOptions())
        theta[list(chain_indices(model, label))] = solution.as_array()
    return tuple(float(v) for v in theta)


def _dist(a, b) -> float:
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


def _xy(p) -> Point2:
    return (float(p[0]), float(p[1]))


def gripper_state(cmd: float) -> float:
    return OPEN if cmd > 0.5 else CLOSED


def handle_positions(task: TaskName, obj: Point2) -> Optional[Tuple[Point2, Point2]]:
    """Grasp points for the left and right gripper; None when the object has no handles."""
    if task is TaskName.LIFT_PLATE:
        offset = LIFT_HANDLE_OFFSET
    elif task is TaskName.HANDOVER:
        offset = HANDOVER_HANDLE_OFFSET
    else:
        return None
    return (obj[0] - offset, obj[1]), (obj[0] + offset, obj[1])


def object_state(state: EnvState) -> Tuple[float, ...]:
    held = tuple(float(h) for h in state.held)
    if state.task is TaskName.LIFT_PLATE:
        return (*state.obj, *held)
    if state.task is TaskName.HANDOVER:
        return (*state.obj, *state.target, *held)
    return (*state.obj, *state.target)


def observe(state: EnvState) -> Observation:
    return Observation(
        timestep=state.time,
        joint_config=state.theta,
        ee_poses=state.ee_poses,
        object_state=object_state(state),
        instruction_id=instruction_id(state.task),
    )


def _ee_poses(model: RobotModel, theta, grippers: Tuple[float, float]):
    fk = fk_all(model, theta)
    vector = PoseVector.from_arms(fk.left, grippers[0], fk.right, grippers[1])
    return fk, vector


def env_reset(spec: TaskSpec, seed: int) -> EnvState:
    model = task_model(spec)
    rng = np.random.default_rng(seed)
    sampled = [float(rng.uniform(lo, hi)) for lo, hi in spec.object_ranges]
    theta = home_configuration(spec.model_name)
    grippers = (OPEN, OPEN)
    _, ee = _ee_poses(model, theta, grippers)

    if spec.name is TaskName.LIFT_PLATE:
        obj = target = (sampled[0], sampled[1])
    elif spec.name is TaskName.HANDOVER:
        obj, target = (sampled[0], sampled[1]), (sampled[2], sampled[3])
    else:
        obj = (sampled[0], sampled[1])
        target = (sampled[0] - PUSH_DISTANCE, sampled[1])

    return EnvState(
        task=spec.name,
        seed=seed,
        theta=theta,
        grippers=grippers,
        ee_poses=ee,
        obj=obj,
        target=target,
        colliding=self_collision_check(model, theta).colliding,
    )


def _grasp(state: EnvState, tips, grippers, prev_grippers):
    held = list(state.held)
    offsets = list(state.offsets)
    handles = handle_positions(state.task, state.obj)
    for i in range(2):
        if grippers[i] > 0.5:
            held[i] = False
        elif prev_grippers[i] > 0.5 and handles is not None and _dist(tips[i], handles[i]) < GRASP_RADIUS:
            held[i] = True
            offsets[i] = (state.obj[0] - tips[i][0], state.obj[1] - tips[i][1])
    return tuple(held), tuple(offsets)


def _move_object(task: TaskName, obj: Point2, tips, held, offsets, holder: Optional[ArmLabel]):
    labels = (ArmLabel.LEFT, ArmLabel.RIGHT)
    if task is TaskName.LIFT_PLATE:
        if all(held):
            carried = [np.add(tips[i], offsets[i]) for i in range(2)]
            obj = _xy(np.mean(carried, axis=0))
        return obj, None

    if task is TaskName.HANDOVER:
        if holder is None or not held[labels.index(holder)]:
            holder = next((labels[i] for i in range(2) if held[i]), None)
        if holder is not None:
            i = labels.index(holder)
            obj = _xy(np.add(tips[i], offsets[i]))
        return obj, holder

    # pushing: the box slides so it never overlaps a tip
    for tip in tips:
        delta = np.subtract(obj, tip)
        distance = float(np.linalg.norm(delta))
        if distance < PUSH_CONTACT:
            direction = delta / distance if distance > 1e-12 else np.array([-1.0, 0.0])
            obj = _xy(np.asarray(tip) + direction * PUSH_CONTACT)
    return obj, None


def _success(spec: TaskSpec, state: EnvState, obj: Point2, held, streak: int) -> Tuple[bool, int]:
    if spec.name is TaskName.LIFT_PLATE:
        raised = all(held) and obj[1] >= state.target[1] + LIFT_HEIGHT
        streak = streak + 1 if raised else 0
        return streak >= LIFT_HOLD_STEPS, streak
    if spec.name is TaskName.HANDOVER:
        return held == (False, True) and _dist(obj, state.target) <= spec.success_pos_tol, streak
    return _dist(obj, state.target) <= spec.success_pos_tol, streak


def env_step(state: EnvState, joint_targets, gripper_cmds) -> EnvState:
    """Advance one step. Out-of-range targets are clamped to the joint limits."""
    spec = task_spec(state.task)
    model = task_model(spec)
    theta = np.asarray(state.theta, dtype=float)
    target = np.clip(np.asarray(joint_targets, dtype=float).ravel(), model.lower_limits(), model.upper_limits())
    theta = theta + np.clip(target - theta, -MAX_JOINT_STEP, MAX_JOINT_STEP)

    grippers = tuple(gripper_state(cmd) for cmd in gripper_cmds)
    fk, ee = _ee_poses(model, theta, grippers)
    tips = [_xy(fk.tip_position(label)) for label in ArmLabel]

    held, offsets = _grasp(state, tips, grippers, state.grippers)
    obj, holder = _move_object(state.task, state.obj, tips, held, offsets, state.holder)
    colliding = self_collision_check(model, theta).colliding
    success, streak = _success(spec, state, obj, held, state.streak)

    return state.model_copy(
        update=dict(
            theta=tuple(float(v) for v in theta),
            grippers=grippers,
            ee_poses=ee,
            obj=obj,
            held=held,
            offsets=offsets,
            holder=holder,
            time=state.time + 1,
            streak=streak,
            success=state.success or success,
            colliding=colliding,
        )
    )


# executor: predicted keyframe pose -> IK -> joint-space interpolation


class ExecutedStep(NamedTuple):
    state: EnvState
    joint_targets: Tuple[float, ...]
    gripper_cmds: Tuple[float, float]


def ik_options(opts: RolloutOptions) -> IkOptions:
    return IkOptions(
        max_iters=opts.ik_max_iters,
        damping=opts.ik_damping,
        pos_tol=opts.ik_pos_tol,
        rot_tol=opts.ik_rot_tol,
    )


def arm_targets(
    model: RobotModel, theta, action: PoseVector, opts: RolloutOptions = RolloutOptions()
) -> Tuple[np.ndarray, List[KStarError]]:
    """Joint target for both arms. Arms whose IK fails keep their current values."""
    target = np.array(theta, dtype=float)
    failures: List[KStarError] = []
    for label in ArmLabel:
        try:
            solution = ik_solve(
                arm_chain(model, label), action.pose(label), arm_theta(model, theta, label), ik_options(opts)
            )
        except (NoConvergence, Unreachable) as e:
            failures.append(e)
            continue
        target[list(chain_indices(model, label))] = solution.as_array()
    return target, failures


def plan_joint_targets(model: RobotModel, theta, action: PoseVector, opts: RolloutOptions = RolloutOptions()):
    target, failures = arm_targets(model, theta, action, opts)
    if failures:
        raise failures[0]
    return JointConfiguration.of(target, model.name)


def drive(state: EnvState, target, gripper_cmds, opts: RolloutOptions = RolloutOptions()) -> Iterator[ExecutedStep]:
    """Interpolate to ``target`` holding the grippers, then apply the gripper command on arrival."""
    start = np.asarray(state.theta, dtype=float)
    target = np.asarray(target, dtype=float)
    holding = state.grippers
    cmds = tuple(gripper_state(cmd) for cmd in gripper_cmds)

    if np.max(np.abs(target - start), initial=0.0) >= 1e-9:
        for i in range(1, opts.substeps + 1):
            waypoint = start + (target - start) * (i / opts.substeps)
            state = env_step(state, waypoint, holding)
            yield ExecutedStep(state, tuple(waypoint.tolist()), holding)

    for i in range(opts.settle_steps):
        arrived = np.max(np.abs(np.asarray(state.theta) - target), initial=0.0) < ARRIVAL_TOL
        final = arrived or i == opts.settle_steps - 1
        applied = cmds if final else holding
        state = env_step(state, target, applied)
        yield ExecutedStep(state, tuple(target.tolist()), applied)
        if final:
            return


def execute_action(
    state: EnvState, action: PoseVector, opts: RolloutOptions = RolloutOptions()
) -> Iterator[ExecutedStep]:
    model = task_model(task_spec(state.task))
    target = plan_joint_targets(model, state.theta, action, opts)
    yield from drive(state, target.as_array(), action.grippers(), opts)


def run_episode(
    spec: TaskSpec,
    action_source: ActionSource,
    opts: RolloutOptions = RolloutOptions(),
    seed: int = 0,
) -> EpisodeResult:
    """Receding-horizon loop: one keyframe action per cycle until success or the step budget."""
    model = task_model(spec)
    budget = opts.step_budget or spec.step_budget
    state = env_reset(spec, seed)
    history = [observe(state)]
    steps = collisions = ik_failures = predicted = feasible = failures_in_row = 0

    while not state.success and steps < budget:
        action = action_source(tuple(history))
        target, failures = arm_targets(model, state.theta, action, opts)
        predicted += 2
        feasible += 2 - len(failures)
        if failures:
            ik_failures += 1
            failures_in_row += 1
            logger.debug("seed %d: ik failed (%s), retry %d", seed, failures[0].code, failures_in_row)
            if failures_in_row > opts.max_retries:
                break
            continue
        failures_in_row = 0

        for executed in drive(state, target, action.grippers(), opts):
            state = executed.state
            steps += 1
            collisions += int(state.colliding)
            if state.success or steps >= budget:
                break
        history.append(observe(state))

    return EpisodeResult(
        seed=seed,
        success=state.success,
        steps=steps,
        collisions=collisions,
        ik_failures=ik_failures,
        predicted_poses=predicted,
        feasible_poses=feasible,
    )


def hold_action(history: Sequence[Observation]) -> PoseVector:
    """Command the current pose and grippers."""
    return history[-1].ee_poses


def replay_actions(actions: Sequence[PoseVector]) -> ActionSource:
    """Feed ``actions`` one per executed cycle, then repeat the last."""

    def source(history: Sequence[Observation]) -> PoseVector:
        return actions[min(len(history) - 1, len(actions) - 1)]

    return source


# scripted experts


def _waypoint(left: Point2, left_grip: float, right: Point2, right_grip: float) -> PoseVector:
    return PoseVector.from_arms(
        Pose(position=(*left, 0.0)), left_grip, Pose(position=(*right, 0.0)), right_grip
    )


def expert_plan(state: EnvState) -> List[PoseVector]:
    home_l, home_r = HOME_TIPS[ArmLabel.LEFT], HOME_TIPS[ArmLabel.RIGHT]
    x, y = state.obj
    if state.task is TaskName.LIFT_PLATE:
        d = LIFT_HANDLE_OFFSET
        raised = (
            (x - d, y + LIFT_RAISE),
            (x + d, y + LIFT_RAISE),
        )
        return [
            _waypoint((x - d - 0.04, y), OPEN, (x + d + 0.04, y), OPEN),
            _waypoint((x - d, y), CLOSED, (x + d, y), CLOSED),
            _waypoint(raised[0], CLOSED, raised[1], CLOSED),
            _waypoint(raised[0], CLOSED, raised[1], CLOSED),
        ]

    if state.task is TaskName.HANDOVER:
        d = HANDOVER_HANDLE_OFFSET
        tx, ty = state.target
        meet = (-d, 0.38)
        return [
            _waypoint((x - 2 * d, y), OPEN, home_r, OPEN),
            _waypoint((x - d, y), CLOSED, home_r, OPEN),
            _waypoint(meet, CLOSED, home_r, OPEN),
            _waypoint(meet, CLOSED, (meet[0] + 3 * d, meet[1]), OPEN),
            _waypoint(meet, CLOSED, (meet[0] + 2 * d, meet[1]), CLOSED),
            _waypoint(meet, OPEN, (meet[0] + 2 * d, meet[1]), CLOSED),
            _waypoint(home_l, OPEN, (tx + d, ty), CLOSED),
        ]

    return [
        _waypoint(home_l, OPEN, (x + PUSH_APPROACH, y), OPEN),
        _waypoint(home_l, OPEN, (x - PUSH_FOLLOW_THROUGH, y), OPEN),
    ]


def _record(state: EnvState, joint_targets, gripper_cmds) -> StepRecord:
    return StepRecord(
        observation=observe(state),
        joint_targets=tuple(float(v) for v in joint_targets),
        gripper_cmds=tuple(float(v) for v in gripper_cmds),
    )


def scripted_expert(task, seed: int, opts: RolloutOptions = RolloutOptions()) -> Demonstration:
    """Solve a hand-authored waypoint plan with IK and record every environment step."""
    spec = task_spec(task)
    model = task_model(spec)
    budget = opts.step_budget or spec.step_budget
    state = env_reset(spec, seed)
    records = [_record(state, state.theta, state.grippers)]
    plan = expert_plan(state)

    def run(action: PoseVector) -> EnvState:
        try:
            target = plan_joint_targets(model, state.theta, action, opts)
        except (NoConvergence, Unreachable) as e:
            raise ExpertFailed(f"{spec.name.value} seed {seed}: {e.message}")
        current = state
        for executed in drive(current, target.as_array(), action.grippers(), opts):
            current = executed.state
            records.append(_record(current, executed.joint_targets, executed.gripper_cmds))
            if current.colliding:
                raise ExpertFailed(f"{spec.name.value} seed {seed}: arms collide at step {current.time}")
            if current.time > budget:
                raise ExpertFailed(f"{spec.name.value} seed {seed}: step budget {budget} exceeded")
            if current.success:
                break
        return current

    for action in plan:
        state = run(action)
        if state.success:
            break
    while not state.success:
        state = run(plan[-1])

    steps = tuple(records)
    return Demonstration(
        task=spec.name,
        seed=seed,
        model_name=model.name,
        steps=steps,
        keyframes=tuple(keyframe_discovery(steps)),
    )


def generate_demos(task, num: int, seed: int = 0, opts: RolloutOptions = RolloutOptions()) -> List[Demonstration]:
    """``num`` demonstrations from consecutive seeds; failing seeds are skipped."""
    demos: List[Demonstration] = []
    candidate = seed
    attempts = 0
    while len(demos) < num and attempts < 2 * num + 10:
        attempts += 1
        try:
            demos.append(scripted_expert(task, candidate, opts))
        except ExpertFailed as e:
            logger.warning("skipping seed %d: %s", candidate, e.message)
        candidate += 1
    if len(demos) < num:
        logger.warning("only %d of %d demonstrations generated for %s", len(demos), num, TaskName(task).value)
    return demos


def demo_violations(demo: Demonstration) -> List[str]:
    """Steps outside joint limits or in collision."""
    model = builtin_model(demo.model_name)
    lower, upper = np.asarray(model.lower_limits()), np.asarray(model.upper_limits())
    problems = []
    for i, step in enumerate(demo.steps):
        theta = step.joint_config
        if np.any(theta < lower - 1e-9) or np.any(theta > upper + 1e-9):
            problems.append(f"step {i}: joint limits")
        if self_collision_check(model, theta).colliding:
            problems.append(f"step {i}: collision")
    return problems
