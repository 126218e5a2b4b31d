"""Comparison schemes built from the same model and solver core.

* OMA-FD: every user gets its own phase, so there is no intra-group
  interference; otherwise identical to the proposed scheme.
* NOMA-HD: the BS never broadcasts while it receives. A dedicated
  broadcast phase without offloading users is appended, and the BS power is
  pinned to zero in every offloading phase, which also removes the
  self-interference term.
"""

from __future__ import annotations

from enum import Enum

from .bcd import SolveReport, SolveSettings, solve_instance
from .energy import Instance
from .units import GroupPartition, SystemConfig


class BaselineKind(str, Enum):
    OMA_FD = "oma_fd"
    NOMA_HD = "noma_hd"


def oma_partition(n_users: int) -> GroupPartition:
    return GroupPartition.singletons(n_users)


def solve_oma_fd(users, cfg: SystemConfig, settings: SolveSettings | None = None) -> SolveReport:
    inst = Instance(users, oma_partition(len(users)), cfg)
    return solve_instance(inst, settings, scheme=BaselineKind.OMA_FD.value)


def solve_noma_hd(users, partition: GroupPartition, cfg: SystemConfig,
                  settings: SolveSettings | None = None) -> SolveReport:
    """Half-duplex NOMA; the broadcast phase is the last entry of q and t."""
    inst = Instance(users, partition, cfg, broadcast_phase=True)
    return solve_instance(inst, settings, scheme=BaselineKind.NOMA_HD.value)


def solve_scheme(scheme: str, users, partition, cfg, settings=None) -> SolveReport:
    from .bcd import solve
    if scheme == "proposed":
        return solve(users, partition, cfg, settings)
    kind = BaselineKind(scheme)
    if kind is BaselineKind.OMA_FD:
        return solve_oma_fd(users, cfg, settings)
    return solve_noma_hd(users, partition, cfg, settings)
