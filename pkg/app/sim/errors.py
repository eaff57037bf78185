"""Exception types raised by the simulation engine"""


class SimulationError(Exception):
    """Base class for every simulator failure"""


class PastEvent(SimulationError, ValueError):
    def __init__(self, fire_time: int, current_time: int):
        super().__init__(f"event at {fire_time}ps scheduled before current time {current_time}ps")
        self.fire_time = fire_time
        self.current_time = current_time


class TtBufferOverrun(SimulationError):
    def __init__(self, node: str, port: str, ct_id: int, time: int):
        super().__init__(f"TT buffer for ctID {ct_id} at {node}:{port} already occupied at {time}ps")
        self.node = node
        self.port = port
        self.ct_id = ct_id
        self.time = time


class QueueOverflow(SimulationError):
    def __init__(self, queue_key: str, capacity: int):
        super().__init__(f"queue {queue_key} exceeded capacity {capacity}")
        self.queue_key = queue_key
        self.capacity = capacity


class UnknownCtId(SimulationError, KeyError):
    pass


class DuplicateId(SimulationError, ValueError):
    def __init__(self, can_id: int, nodes: list[str], time: int):
        super().__init__(f"CAN id {can_id:#x} contended by {', '.join(nodes)} at {time}ps")
        self.can_id = can_id
        self.nodes = nodes
        self.time = time


class NotAMember(SimulationError, ValueError):
    pass


class MalformedPayload(SimulationError, ValueError):
    pass


class IncompleteTrail(SimulationError, ValueError):
    pass


class Infeasible(SimulationError, ValueError):
    pass


class LcmOverflow(SimulationError, ValueError):
    pass


class DispatchError(SimulationError):
    """A component failed while handling an event"""

    def __init__(self, event, cause: BaseException):
        super().__init__(f"dispatch of {event.describe()} failed: {cause}")
        self.event = event
        self.cause = cause


class StopSimulation(SimulationError):
    """Raised by a dispatch target to end the run early"""

    def __init__(self, reason: str, violation=None):
        super().__init__(reason)
        self.reason = reason
        self.violation = violation
