"""Constraint-graph representation, elimination ordering, and cycle handling.

A mechanism maps to a graph whose nodes are bodies and constraint nodes
(joints, contacts) and whose edges are incidences; velocity-coupling force
elements add body-body edges. A depth-first search from a per-component
root yields the processing order for the sparse block factorization:
leaves first, root last. Kinematic loops are opened by merging the first
and last joint of each detected loop into a single supernode, which
confines factorization fill-in to the loop members and the opener.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ModelError

WORLD_KEY = -1

BODY = "body"
JOINT = "joint"
CONTACT = "contact"
PLAIN = "plain"


@dataclass
class GraphNode:
    key: int
    dim: int
    kind: str = PLAIN
    world_attached: bool = False
    members: tuple = ()

    def __post_init__(self):
        if not self.members:
            self.members = (self.key,)


class Graph:
    """Undirected graph with typed, block-dimensioned nodes."""

    def __init__(self):
        self.nodes: dict[int, GraphNode] = {}
        self.adj: dict[int, set[int]] = {}

    def add_node(self, key, dim, kind=PLAIN, world_attached=False, members=()):
        if key in self.nodes:
            raise ModelError(f"duplicate graph node {key}")
        self.nodes[key] = GraphNode(key, dim, kind, world_attached, tuple(members))
        self.adj[key] = set()

    def add_edge(self, a, b):
        if a not in self.nodes or b not in self.nodes:
            raise ModelError(f"edge ({a}, {b}) references a missing node")
        if a == b:
            raise ModelError(f"self edge at node {a}")
        self.adj[a].add(b)
        self.adj[b].add(a)

    @property
    def num_edges(self):
        return sum(len(v) for v in self.adj.values()) // 2

    def neighbors(self, key):
        return sorted(self.adj[key])

    def copy(self):
        g = Graph()
        for n in self.nodes.values():
            g.add_node(n.key, n.dim, n.kind, n.world_attached, n.members)
        for a, nbrs in self.adj.items():
            for b in nbrs:
                if a < b:
                    g.add_edge(a, b)
        return g


@dataclass
class GraphOrdering:
    """Processing order plus the structural relations the factorization uses.

    ``order`` lists node keys leaves-first, root(s) last. ``children`` and
    ``parents`` refer to the extended sparsity pattern (original edges plus
    fill), sorted by position in ``order``. ``cyclic_children[i]`` are the
    children of ``i`` that are pattern-adjacent to another child of ``i``
    and therefore exchange Schur corrections during factorization.
    """

    nodes: dict = field(default_factory=dict)          # key -> GraphNode (merged)
    order: list = field(default_factory=list)
    position: dict = field(default_factory=dict)       # key -> index in order
    tree_parent: dict = field(default_factory=dict)
    children: dict = field(default_factory=dict)       # all children per node
    acyclic_children: dict = field(default_factory=dict)
    cyclic_children: dict = field(default_factory=dict)
    parents: dict = field(default_factory=dict)        # direct + loop-opening
    fill_pairs: set = field(default_factory=set)       # unordered key pairs
    pattern: set = field(default_factory=set)          # extended unordered pairs
    loop_openers: list = field(default_factory=list)
    cyclic_nodes: set = field(default_factory=set)
    cycle_count: int = 0

    @property
    def dims(self):
        return {k: n.dim for k, n in self.nodes.items()}

    def is_cyclic(self, key):
        return key in self.cyclic_nodes


def _dfs_preorder(graph, root, visited):
    """Iterative DFS returning (preorder, tree_parent, back_edges) for one component."""
    preorder = []
    parent = {root: None}
    back_edges = []
    seen_back = set()
    stack = [(root, iter(graph.neighbors(root)))]
    visited.add(root)
    preorder.append(root)
    while stack:
        node, it = stack[-1]
        advanced = False
        for nbr in it:
            if nbr == parent[node]:
                continue
            if nbr in visited:
                # each undirected back edge is seen from both endpoints
                pair = frozenset((node, nbr))
                if pair not in seen_back:
                    seen_back.add(pair)
                    back_edges.append((node, nbr))
                continue
            visited.add(nbr)
            parent[nbr] = node
            preorder.append(nbr)
            stack.append((nbr, iter(graph.neighbors(nbr))))
            advanced = True
            break
        if not advanced:
            stack.pop()
    return preorder, parent, back_edges


def _tree_path(parent, node, ancestor):
    """Path [ancestor, ..., node] along DFS tree edges."""
    path = [node]
    while node != ancestor:
        node = parent[node]
        if node is None:
            raise ModelError("back edge target is not an ancestor")
        path.append(node)
    path.reverse()
    return path


def _component_root(graph, keys):
    """Pick the elimination root for one connected component.

    A world-attached constraint node, if present, must come last so its
    zero diagonal receives Schur updates from every body before being
    inverted; otherwise the lowest body key (or lowest key) is used.
    """
    world = sorted(k for k in keys if graph.nodes[k].world_attached
                   and graph.nodes[k].kind in (JOINT, CONTACT))
    if world:
        return world[0]
    bodies = sorted(k for k in keys if graph.nodes[k].kind == BODY)
    if bodies:
        return bodies[0]
    return min(keys)


def _merge_pair(graph, a, b):
    """Merge node b into node a, concatenating block rows (a's members first)."""
    na, nb = graph.nodes[a], graph.nodes[b]
    merged = GraphNode(
        key=min(a, b),
        dim=na.dim + nb.dim,
        kind=na.kind,
        world_attached=na.world_attached or nb.world_attached,
        members=na.members + nb.members,
    )
    nbrs = (graph.adj[a] | graph.adj[b]) - {a, b}
    for k in (a, b):
        for other in graph.adj[k]:
            graph.adj[other].discard(k)
        del graph.adj[k]
        del graph.nodes[k]
    graph.nodes[merged.key] = merged
    graph.adj[merged.key] = set()
    for other in nbrs:
        graph.adj[merged.key].add(other)
        graph.adj[other].add(merged.key)
    return merged.key


def _open_loops(graph):
    """Merge the first and last joint of each detected kinematic loop.

    Loops closed through the world frame are found by temporarily adding a
    world pseudo-node connected to every world-attached constraint node.
    Merging repeats until no detected cycle starts and ends at two distinct
    joints flanking a body.
    """
    g = graph.copy()
    world_attached = [k for k, n in g.nodes.items() if n.world_attached]
    has_world = len(world_attached) > 0
    if has_world:
        g.add_node(WORLD_KEY, 0, kind=BODY)
        for k in world_attached:
            g.add_edge(WORLD_KEY, k)

    openers = []
    for _ in range(len(g.nodes) + 1):
        visited = set()
        merge = None
        for root in sorted(g.nodes):
            if root in visited:
                continue
            preorder, parent, back_edges = _dfs_preorder(g, root, visited)
            for u, w in back_edges:
                path = _tree_path(parent, u, w)
                if g.nodes[w].kind != BODY:
                    continue
                first, last = path[1], path[-1]
                if (first != last and g.nodes[first].kind == JOINT
                        and g.nodes[last].kind == JOINT):
                    merge = (first, last)
                    break
            if merge:
                break
        if merge is None:
            break
        openers.append(_merge_pair(g, *merge))
    else:
        raise ModelError("loop opening did not converge")

    if has_world:
        for other in g.adj[WORLD_KEY]:
            g.adj[other].discard(WORLD_KEY)
        del g.adj[WORLD_KEY]
        del g.nodes[WORLD_KEY]
    # keys may have been re-merged; keep only openers that survived
    openers = [k for k in dict.fromkeys(openers) if k in g.nodes]
    return g, openers


def _symbolic_fill(order, position, pattern_adj):
    """Standard symbolic elimination: closing the pattern over the ordering."""
    fill = set()
    for key in order:
        later = [n for n in pattern_adj[key] if position[n] > position[key]]
        for i, a in enumerate(later):
            for b in later[i + 1:]:
                if b not in pattern_adj[a]:
                    pattern_adj[a].add(b)
                    pattern_adj[b].add(a)
                    fill.add(frozenset((a, b)))
    return fill


def dfs_order(graph: Graph) -> GraphOrdering:
    """Build the elimination ordering for a (possibly cyclic) constraint graph.

    Returns a GraphOrdering over the loop-opened graph: processing list
    (leaves first, per-component roots last), tree and pattern relations,
    detected cycles, and the symbolic fill the factorization will write.
    """
    if not graph.nodes:
        return GraphOrdering()

    g, openers = _open_loops(graph)

    ordering = GraphOrdering(nodes=dict(g.nodes), loop_openers=openers)
    visited = set()
    roots = []
    components = []
    remaining = set(g.nodes)
    while remaining:
        root = _component_root(g, remaining)
        preorder, parent, back_edges = _dfs_preorder(g, root, visited)
        components.append((preorder, parent, back_edges))
        roots.append(root)
        remaining -= set(preorder)

    order = []
    for preorder, parent, back_edges in components:
        order.extend(reversed(preorder))
        ordering.tree_parent.update(parent)
        ordering.cycle_count += len(back_edges)
        for u, w in back_edges:
            ordering.cyclic_nodes.update(_tree_path(parent, u, w))
    ordering.order = order
    ordering.position = {k: i for i, k in enumerate(order)}

    pattern_adj = {k: set(g.adj[k]) for k in g.nodes}
    ordering.fill_pairs = _symbolic_fill(order, ordering.position, pattern_adj)
    ordering.pattern = {frozenset((a, b)) for a in pattern_adj for b in pattern_adj[a]}

    pos = ordering.position
    for k in order:
        kids = sorted((n for n in pattern_adj[k] if pos[n] < pos[k]),
                      key=pos.__getitem__)
        ordering.children[k] = kids
        ordering.parents[k] = sorted((n for n in pattern_adj[k] if pos[n] > pos[k]),
                                     key=pos.__getitem__)
        kidset = set(kids)
        cyc = [c for c in kids if pattern_adj[c] & kidset]
        ordering.cyclic_children[k] = cyc
        ordering.acyclic_children[k] = [c for c in kids if c not in set(cyc)]
    return ordering


# ---------------------------------------------------------------------------
# Topology builders used by the solver benchmarks and tests.

def chain_graph(n, dim=6):
    """Path of n nodes."""
    g = Graph()
    for i in range(n):
        g.add_node(i, dim)
    for i in range(n - 1):
        g.add_edge(i, i + 1)
    return g


def ladder_graph(rungs, dim=6):
    """Two rails of `rungs` nodes joined pairwise: cycles of four nodes."""
    g = Graph()
    for i in range(2 * rungs):
        g.add_node(i, dim)
    for i in range(rungs - 1):
        g.add_edge(2 * i, 2 * i + 2)
        g.add_edge(2 * i + 1, 2 * i + 3)
    for i in range(rungs):
        g.add_edge(2 * i, 2 * i + 1)
    return g


def net_graph(rows, cols, dim=6):
    """Square grid of nodes."""
    g = Graph()
    for i in range(rows * cols):
        g.add_node(i, dim)
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                g.add_edge(i, i + 1)
            if r + 1 < rows:
                g.add_edge(i, i + cols)
    return g


def crystal_graph(nx, ny, nz, dim=6):
    """Cubic lattice of nodes."""
    g = Graph()

    def idx(x, y, z):
        return (x * ny + y) * nz + z

    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                g.add_node(idx(x, y, z), dim)
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                if x + 1 < nx:
                    g.add_edge(idx(x, y, z), idx(x + 1, y, z))
                if y + 1 < ny:
                    g.add_edge(idx(x, y, z), idx(x, y + 1, z))
                if z + 1 < nz:
                    g.add_edge(idx(x, y, z), idx(x, y, z + 1))
    return g
