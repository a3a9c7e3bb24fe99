class XdmaError(ValueError):
    def __init__(self, message: str):
        super().__init__(message)


class ConfigError(XdmaError):
    pass


class LayoutError(XdmaError):
    pass


class PatternError(XdmaError):
    pass


class DecodeError(XdmaError):
    pass


class SimulationFault(XdmaError):
    pass


class PluginError(SimulationFault):
    pass


class ProtocolError(SimulationFault):
    pass


class CycleBudgetExceeded(SimulationFault):
    def __init__(self, budget: int):
        super().__init__(f"cycle budget of {budget} cycles exceeded")
        self.budget: int = budget


class DeadlockError(SimulationFault):
    def __init__(self, cycle: int, component: list[str]):
        super().__init__(
            f"no progress at cycle {cycle}; wait-for cycle: {' -> '.join(component)}"
        )
        self.cycle: int = cycle
        self.component: list[str] = component


class OracleMismatch(XdmaError):
    def __init__(self, address: int, expected: int, actual: int):
        super().__init__(
            f"destination differs from reference at address {address:#x}: "
            f"expected {expected:#04x}, got {actual:#04x}"
        )
        self.address: int = address
        self.expected: int = expected
        self.actual: int = actual
