from collections.abc import Callable, Hashable, Iterable, Mapping
from typing import TypeVar

T = TypeVar("T", bound=Hashable)


def strongly_connected_components(
    nodes: Iterable[T], get_successors: Callable[[T], Iterable[T]]
) -> list[list[T]]:
    """
    Iterative Tarjan over every node in nodes. Components are returned in the
    order Tarjan closes them (reverse topological order of the condensation).
    Successors that are not in nodes are still visited.
    """

    class NodeInfo:
        def __init__(self, index: int, successors: Iterable[T]):
            self.index: int = index
            self.backlink: int = index
            self.successors = iter(successors)

    components: list[list[T]] = []
    infos: dict[T, NodeInfo] = {}
    counter = 0
    for root in nodes:
        if root in infos:
            continue
        stack: list[T] = [root]
        call_stack: list[T] = [root]
        infos[root] = NodeInfo(counter, get_successors(root))
        counter += 1
        on_stack: set[T] = {root}
        while call_stack:
            node = call_stack[-1]
            info = infos[node]
            descended = False
            for succ in info.successors:
                succ_info = infos.get(succ)
                if succ_info is None:
                    infos[succ] = NodeInfo(counter, get_successors(succ))
                    counter += 1
                    stack.append(succ)
                    on_stack.add(succ)
                    call_stack.append(succ)
                    descended = True
                    break
                if succ in on_stack:
                    info.backlink = min(info.backlink, succ_info.index)
            if descended:
                continue
            call_stack.pop()
            if call_stack:
                parent = infos[call_stack[-1]]
                parent.backlink = min(parent.backlink, info.backlink)
            if info.backlink == info.index:
                component = []
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    component.append(member)
                    if member == node:
                        break
                components.append(component)
    return components


def find_wait_cycle(wait_for: Mapping[T, Iterable[T]]) -> list[T] | None:
    """
    Returns the members of a cyclic wait-for component (a component with more
    than one member, or a node waiting on itself), or None if the graph is
    acyclic.
    """
    for component in strongly_connected_components(
        sorted(wait_for.keys(), key=str), lambda n: wait_for.get(n, ())
    ):
        if len(component) > 1:
            return list(reversed(component))
        node = component[0]
        if node in wait_for.get(node, ()):
            return component
    return None
