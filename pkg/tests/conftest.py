"""Shared builders for the bundled example problems."""

from liftlyap import cli
from liftlyap.integrability import ResidualSystem


def build_pipeline(name: str):
    """Load a bundled problem and run it up to the residual system.

    Returns (problem, clf, pair, target_data, residual_system).
    """
    problem = cli.build_problem(cli.load_spec(cli.fixture_path(name)))
    _, clf = cli.stage_quotient(problem)
    pair = cli.stage_geometry(problem)
    td = cli.stage_target(problem, clf)
    rs = ResidualSystem(pair, td.x_field)
    return problem, clf, pair, td, rs
