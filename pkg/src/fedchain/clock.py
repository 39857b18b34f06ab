from dataclasses import dataclass


@dataclass
class VirtualClock:
    """Simulation time in seconds; never moves backwards."""

    now: float = 0.0

    def advance(self, seconds: float) -> float:
        if seconds < 0:
            raise ValueError("cannot advance by a negative duration")
        self.now += seconds
        return self.now

    def advance_to(self, t: float) -> float:
        if t < self.now:
            raise ValueError(f"clock is at {self.now}, cannot move back to {t}")
        self.now = float(t)
        return self.now
