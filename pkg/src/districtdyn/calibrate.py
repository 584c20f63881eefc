"""Derive dynamical parameters from yearly financial records.

The pipeline turns four numbers per firm (revenue, material cost, overheads,
production cost, all millions of 2013 GBP per year) into the initial utility
u0 and the fractions beta, rho, epsilon, d:

    u0      = revenue + |material| + overheads + production
    value   = revenue + |material|      if material < 0 (paid to take it)
            = revenue                   otherwise
    epsilon = (value - max(material, 0) - overheads - production) / value
    beta    = 0 if material <= 0 else material / u0
    rho     = value / (u0 * (1 + epsilon))
    d       = overheads / u0

A firm that also buys materials inside the district, while sourcing
externally (primary supplier or hub), has beta halved: half its purchases
are assumed local.  Symmetrically an external seller (end consumer or hub)
that also sells inside the district has rho halved.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from districtdyn.errors import CalibrationError
from districtdyn.netmodel import (
    FinancialRecord,
    Flags,
    ModelParams,
    Network,
    Role,
)

__all__ = ["FinancialRecord", "CalibrationRow", "derive_params", "calibrate_network"]


@dataclass(frozen=True)
class CalibrationRow:
    """One derived row of the calibration report."""

    node_id: str
    params: ModelParams
    beta_halved: bool
    rho_halved: bool


def derive_params(rec: FinancialRecord, role: Role, flags: Flags) -> ModelParams:
    """Apply the derivation rules above for a single firm."""
    u0 = rec.revenue + abs(rec.material) + rec.overheads + rec.production
    if rec.material < 0:
        value = rec.revenue + abs(rec.material)
    else:
        value = rec.revenue
    if value <= 0:
        raise CalibrationError("value of goods and services is <= 0")
    material_bought = max(rec.material, 0.0)
    epsilon = (value - material_bought - rec.overheads - rec.production) / value
    if 1.0 + epsilon <= 0:
        raise CalibrationError(f"profit fraction {epsilon:.4f} implies non-positive 1+epsilon")

    beta = 0.0 if rec.material <= 0 else rec.material / u0
    if role.buys_externally and flags.buys_in_district:
        beta /= 2.0

    rho = value / (u0 * (1.0 + epsilon))
    if role.sells_externally and flags.sells_in_district:
        rho /= 2.0

    d = rec.overheads / u0
    return ModelParams(u0=u0, beta=beta, rho=rho, epsilon=epsilon, d=d)


def calibrate_network(network: Network) -> tuple[Network, list[CalibrationRow]]:
    """Fill in params for every node that carries financials.

    Nodes that already have explicit params pass through untouched and do
    not appear in the report.  Roles must be assigned.
    """
    new_nodes = []
    report = []
    for n in network.nodes:
        if n.params is not None:
            new_nodes.append(n)
            continue
        if n.financials is None:
            raise CalibrationError(f"node {n.id}: no params and no financials")
        if n.role is None:
            raise CalibrationError(f"node {n.id}: role must be assigned before calibration")
        try:
            params = derive_params(n.financials, n.role, n.flags)
        except CalibrationError as e:
            raise CalibrationError(f"node {n.id}: {e}") from e
        # financials are consumed: the calibrated node carries params only,
        # so a round trip through serialization stays loadable
        new_nodes.append(replace(n, params=params, financials=None))
        report.append(CalibrationRow(
            node_id=n.id,
            params=params,
            beta_halved=n.role.buys_externally and n.flags.buys_in_district,
            rho_halved=n.role.sells_externally and n.flags.sells_in_district,
        ))
    return replace(network, nodes=tuple(new_nodes)), report


def report_csv(report: list[CalibrationRow]) -> str:
    """Human-readable calibration report (one CSV row per derived node)."""
    lines = ["node,u0,beta,rho,epsilon,d,beta_halved,rho_halved"]
    for row in report:
        p = row.params
        lines.append(
            f"{row.node_id},{p.u0!r},{p.beta!r},{p.rho!r},{p.epsilon!r},{p.d!r},"
            f"{row.beta_halved},{row.rho_halved}"
        )
    return "\n".join(lines) + "\n"
