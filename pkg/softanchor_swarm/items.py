"""Records produced by the simulator and the experiments.

Every record is a flat keyword-only dataclass so the pipeline can write it as
one CSV row; the field order is the column order.
"""

from dataclasses import dataclass, field


class _Record:
    """Mapping-style access shared by every record."""

    def __getitem__(self, attr: str) -> object:
        """Get the value of the specified attribute.

        Args:
            attr (str): The attribute name.

        Returns:
            The value of the specified attribute.
        """
        return getattr(self, attr)


# pylint: disable=too-many-instance-attributes
@dataclass(kw_only=True)
class StepRecord(_Record):
    """State and command of one robot at one integration step.

    Attributes:
        t (float): Simulated time, seconds.
        robot (int): Robot index.
        pilot (bool): Whether the robot is the pilot.
        px (float): Position x, metres.
        py (float): Position y, metres.
        theta (float): Heading, radians.
        v (float): Linear velocity, m/s.
        w (float): Angular velocity, rad/s.
        v_dot (float): Commanded linear acceleration.
        w_dot (float): Commanded angular acceleration.
        pair_statuses (str): ``index:status`` of every goal pair, ``;``-separated.
    """

    t: float
    robot: int
    pilot: bool
    px: float
    py: float
    theta: float
    v: float
    w: float
    v_dot: float
    w_dot: float
    pair_statuses: str = ""


@dataclass(kw_only=True)
class PlanRecord(_Record):
    """Diagnostics of one planning instant.

    Attributes:
        t (float): Simulated time of the plan, seconds.
        phase (str): Phase kind that requested it.
        iterations (int): SQP iterations.
        kkt_residual (float): Relative stationarity residual.
        objective (float): Objective at the accepted point.
        converged (bool): Whether the solve was accepted.
        failsafe (bool): Whether the decayed previous command was applied instead.
        solve_time_ms (float): Wall-clock solve time.
    """

    t: float
    phase: str
    iterations: int
    kkt_residual: float
    objective: float
    converged: bool
    failsafe: bool
    solve_time_ms: float


@dataclass(kw_only=True)
class CouplingResultItem(_Record):
    """Coupling success at one lateral offset.

    Attributes:
        offset_mm (float): Lateral offset of the anchor robot.
        trials (int): Trials run.
        successes (int): Trials coupled within the timeout.
        success_rate (float): ``successes / trials``.
        mean_time_s (float | None): Mean coupling time of the successful trials.
    """

    offset_mm: float
    trials: int
    successes: int
    success_rate: float
    mean_time_s: float | None = None


@dataclass(kw_only=True)
class DecouplingResultItem(_Record):
    """Wiggle decoupling statistics.

    Attributes:
        trials (int): Trials run.
        successes (int): Trials decoupled within the timeout.
        success_rate (float): ``successes / trials``.
        mean_time_s (float | None): Mean decoupling time of the successful trials.
        holding_load_kg (float): Load the coupling carries, reported alongside.
    """

    trials: int
    successes: int
    success_rate: float
    mean_time_s: float | None = None
    holding_load_kg: float = 0.0


@dataclass(kw_only=True)
class TimingItem(_Record):
    """Median solve time for one robot count and horizon.

    Attributes:
        robots (int): Number of robots N.
        horizon (int): Prediction horizon H_m.
        constraint_horizon (int): Constraint horizon H_c.
        repeats (int): Solves timed.
        median_ms (float): Median wall-clock solve time.
        median_iterations (float): Median SQP iterations.
    """

    robots: int
    horizon: int
    constraint_horizon: int
    repeats: int
    median_ms: float
    median_iterations: float


@dataclass(kw_only=True)
class PipDisagreementItem(_Record):
    """A sample where the half-plane test and the ray-casting oracle disagree.

    Attributes:
        sample (int): Sample index.
        px (float): Query point x.
        py (float): Query point y.
        residual_inside (bool): Verdict of the half-plane residuals.
        oracle_inside (bool): Verdict of ray casting.
        vertices (str): Polygon vertices as ``x y;x y;...``.
    """

    sample: int
    px: float
    py: float
    residual_inside: bool
    oracle_inside: bool
    vertices: str


@dataclass(kw_only=True)
class RunManifest(_Record):
    """What a command ran and what it wrote.

    Attributes:
        command (str): Subcommand name.
        config_path (str | None): Scenario file, if any.
        seed (int): Seed used.
        output_dir (str): Directory holding the artifacts.
        artifacts (list[str]): Artifact file names, manifest excluded.
        config_hash (str | None): SHA-256 of the canonical configuration.
        status (str): ``ok``, ``config_error``, ``solver_failure`` or ``disagreement``.
    """

    command: str
    config_path: str | None = None
    seed: int = 0
    output_dir: str = ""
    artifacts: list[str] = field(default_factory=list)
    config_hash: str | None = None
    status: str = "ok"
