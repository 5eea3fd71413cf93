"""Linear service prices for FPU flexibility and grid-loss monetization.

All functions are pure. Costs are in EUR; flexibility in MW / Mvar for a
provision duration d in hours.
"""

from __future__ import annotations

from dataclasses import dataclass


class MarketError(ValueError):
    pass


@dataclass(frozen=True)
class CostFactors:
    """Service price bid of one FPU stakeholder.

    c_s_p / c_s_q are EUR/MWh and EUR/Mvarh for the symmetric (magnitude)
    tariff. The four signed factors are optional and, when all present,
    price positive and negative flexibility separately.
    """

    c_s_p: float
    c_s_q: float
    c_s_p_plus: float | None = None
    c_s_p_minus: float | None = None
    c_s_q_plus: float | None = None
    c_s_q_minus: float | None = None

    def __post_init__(self):
        for name in ("c_s_p", "c_s_q", "c_s_p_plus", "c_s_p_minus",
                     "c_s_q_plus", "c_s_q_minus"):
            val = getattr(self, name)
            if val is not None and val < 0:
                raise MarketError(f"cost factor {name} must be >= 0, got {val}")
        signed = [self.c_s_p_plus, self.c_s_p_minus,
                  self.c_s_q_plus, self.c_s_q_minus]
        if any(v is not None for v in signed) and not all(v is not None for v in signed):
            raise MarketError("signed cost factors must be given as a full quadruple")

    @property
    def has_signed(self) -> bool:
        return self.c_s_p_plus is not None

    def signed_quadruple(self):
        """(p+, p-, q+, q-) factors; falls back to the symmetric tariff."""
        if self.has_signed:
            return (self.c_s_p_plus, self.c_s_p_minus,
                    self.c_s_q_plus, self.c_s_q_minus)
        return (self.c_s_p, self.c_s_p, self.c_s_q, self.c_s_q)


@dataclass(frozen=True)
class LossPriceSpec:
    """Price for increased grid losses relative to the base state."""

    c_loss: float       # EUR/MWh
    p_loss_0: float     # MW, losses of the initial system state
    d: float = 1.0      # h

    def __post_init__(self):
        if self.c_loss < 0:
            raise MarketError("c_loss must be >= 0")
        if self.d <= 0:
            raise MarketError("duration d must be > 0")


def service_cost(dp: float, dq: float, factors: CostFactors, d: float = 1.0) -> float:
    """Utilization payment (|dp|*c_s_p + |dq|*c_s_q) * d.

    Magnitudes are used so that flexibility in either direction is paid to
    the stakeholder, never charged.
    """
    if d <= 0:
        raise MarketError("duration d must be > 0")
    return (abs(dp) * factors.c_s_p + abs(dq) * factors.c_s_q) * d


def service_cost_signed(dp_plus: float, dp_minus: float,
                        dq_plus: float, dq_minus: float,
                        factors: CostFactors, d: float = 1.0) -> float:
    """Utilization payment with separate prices for +/- direction."""
    if d <= 0:
        raise MarketError("duration d must be > 0")
    parts = (dp_plus, dp_minus, dq_plus, dq_minus)
    if any(v < 0 for v in parts):
        raise MarketError("signed flexibility components must be >= 0")
    if (dp_plus > 0 and dp_minus > 0) or (dq_plus > 0 and dq_minus > 0):
        raise MarketError("at most one of each +/- pair may be nonzero")
    cpp, cpm, cqp, cqm = factors.signed_quadruple()
    return (dp_plus * cpp + dp_minus * cpm + dq_plus * cqp + dq_minus * cqm) * d


def particle_cost(bus_costs, loss: LossPriceSpec, p_loss_j: float) -> float:
    """Total service price of one particle: FPU payments plus loss cost.

    Only losses above the base-state level are monetized; a loss reduction
    benefits the lower-level operator and costs nothing here.
    """
    total = float(sum(bus_costs))
    delta = p_loss_j - loss.p_loss_0
    if delta > 0.0:
        total += delta * loss.c_loss * loss.d
    return total
