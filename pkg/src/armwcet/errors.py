"""Exception hierarchy shared by every analysis stage."""


class AnalysisError(Exception):
    """Base class for all errors raised by armwcet."""


# listing front-end

class ListingError(AnalysisError, ValueError):
    pass


class MalformedLine(ListingError):
    def __init__(self, line_no, detail=""):
        self.line_no = line_no
        super().__init__(f"line {line_no}: malformed line{': ' + detail if detail else ''}")


class UnsupportedMnemonic(ListingError):
    def __init__(self, line_no, token):
        self.line_no = line_no
        self.token = token
        super().__init__(f"line {line_no}: unsupported mnemonic {token!r}")


class DuplicateAddress(ListingError):
    def __init__(self, addr):
        self.addr = addr
        super().__init__(f"duplicate instruction address {addr}")


class NonAlignedAddress(ListingError):
    def __init__(self, addr):
        self.addr = addr
        super().__init__(f"instruction address {addr} is not a multiple of 4")


# semantics / assumption violations

class AssumptionViolation(AnalysisError):
    """A program breaks one of the analysable-program assumptions."""


class UndefinedMemoryBase(AssumptionViolation):
    def __init__(self, addr):
        self.addr = addr
        super().__init__(f"instruction at {addr}: effective memory address is unknown")


class NonTerminatingSlice(AssumptionViolation):
    def __init__(self, node, detail="symbolic state revisited"):
        self.node = node
        super().__init__(f"slice simulation does not terminate at node {node}: {detail}")


class BotStackPointer(AssumptionViolation):
    def __init__(self, node):
        self.node = node
        super().__init__(f"stack pointer is unknown at node {node}")


class CycleDetected(AssumptionViolation):
    def __init__(self, node):
        self.node = node
        super().__init__(f"configuration repeats on the current path (program at node {node})")


# graphs and CFG construction

class UnreachableExit(AnalysisError):
    def __init__(self, node):
        self.node = node
        super().__init__(f"node {node} cannot reach the exit")


class CfgError(AnalysisError):
    pass


class BotBranchTarget(CfgError):
    def __init__(self, node):
        self.node = node
        super().__init__(f"branch target of node {node} is unknown")


class InvalidBranchTarget(CfgError):
    def __init__(self, node, target):
        self.node = node
        self.target = target
        super().__init__(f"node {node} branches to {target}, which is not an instruction")


class NoProgress(CfgError):
    def __init__(self, nodes):
        self.nodes = tuple(nodes)
        super().__init__(f"unresolved indirect branches remain: {list(self.nodes)}")


# hardware / exploration

class InvalidGeometry(AnalysisError, ValueError):
    pass


class ConfigError(AnalysisError, ValueError):
    pass


class ProtocolViolation(AnalysisError):
    pass


class StateBudgetExceeded(AnalysisError):
    def __init__(self, limit):
        self.limit = limit
        super().__init__(f"exploration exceeded the budget of {limit} states")
