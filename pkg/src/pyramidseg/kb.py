"""Supervisor-authored knowledge base: word prototypes, scenes, and annotation.

KB files are YAML::

    author: jane            # optional provenance
    version: "1"
    prototypes:
      - word: sky
        predicates:
          - {attribute: mean_intensity, lo: 180, hi: 255}
          - {attribute: rel_y, lo: 0.0, hi: 0.5, weight: 2}
    scenes:
      - name: landscape
        members: [sky, ground, sun]
        relations:
          - [sky, above, ground]
          - [sun, sub-part-of, sky]

Attributes are scalars derived from a level-0 region descriptor (see
``ATTRIBUTES``). Relations are ``left-of``, ``right-of``, ``above``,
``below``, ``adjacent`` and ``sub-part-of``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Mapping, Sequence

import yaml

from .describe import DescriptionStack, RegionDescriptor, relation
from .raster import UnreadableFileError

DEFAULT_MATCH_THRESHOLD = 0.5
DEFAULT_CONTEXT_THRESHOLD = 0.5
EXHAUSTIVE_LIMIT = 6

ImageDims = tuple[int, int]

ATTRIBUTES: dict[str, Callable[[RegionDescriptor, ImageDims], float]] = {
    "mean_intensity": lambda d, dims: d.mean_intensity,
    "relative_size": lambda d, dims: d.size / (dims[0] * dims[1]),
    "aspect_ratio": lambda d, dims: d.bbox_width / d.bbox_height,
    "elongation": lambda d, dims: max(d.bbox_width, d.bbox_height) / min(d.bbox_width, d.bbox_height),
    "extent": lambda d, dims: d.size / (d.bbox_width * d.bbox_height),
    "rel_x": lambda d, dims: (d.centroid[0] + 0.5) / dims[0],
    "rel_y": lambda d, dims: (d.centroid[1] + 0.5) / dims[1],
}
RELATIONS = ("left-of", "right-of", "above", "below", "adjacent", "sub-part-of")


class KBError(ValueError):
    """A KB file problem, located by file, line and column (1-based)."""

    def __init__(self, message: str, source: str = "<kb>", line: int | None = None, column: int | None = None):
        self.message = message
        self.source = source
        self.line = line
        self.column = column
        where = source if line is None else f"{source}:{line}:{column}"
        super().__init__(f"{where}: {message}")


class KBSchemaError(KBError):
    pass


class KBReferenceError(KBError):
    pass


class KBRangeError(KBError):
    pass


@dataclass(frozen=True)
class AttributePredicate:
    attribute: str
    lo: float
    hi: float
    weight: float = 1.0

    def __post_init__(self):
        if self.attribute not in ATTRIBUTES:
            raise ValueError(f"unknown attribute {self.attribute!r}")
        if self.lo > self.hi:
            raise ValueError(f"empty range [{self.lo}, {self.hi}]")
        if not self.weight > 0:
            raise ValueError("predicate weight must be > 0")

    def holds(self, desc: RegionDescriptor, dims: ImageDims) -> bool:
        return self.lo <= ATTRIBUTES[self.attribute](desc, dims) <= self.hi


@dataclass(frozen=True)
class ObjectPrototype:
    word: str
    predicates: tuple[AttributePredicate, ...]

    def __post_init__(self):
        if not self.predicates:
            raise ValueError(f"prototype {self.word!r} has no predicates")

    def score(self, desc: RegionDescriptor, dims: ImageDims) -> float:
        total = sum(p.weight for p in self.predicates)
        hit = sum(p.weight for p in self.predicates if p.holds(desc, dims))
        return hit / total


@dataclass(frozen=True)
class SceneNode:
    name: str
    members: tuple[str, ...]
    relations: tuple[tuple[str, str, str], ...] = ()


@dataclass(frozen=True)
class KnowledgeBase:
    prototypes: Mapping[str, ObjectPrototype]
    scenes: tuple[SceneNode, ...] = ()
    author: str | None = None
    version: str | None = None

    def __post_init__(self):
        for scene in self.scenes:
            for word in scene.members:
                if word not in self.prototypes:
                    raise ValueError(f"scene {scene.name!r}: word {word!r} has no prototype")
            for a, rel, b in scene.relations:
                if rel not in RELATIONS:
                    raise ValueError(f"scene {scene.name!r}: unknown relation {rel!r}")
                for w in (a, b):
                    if w not in scene.members:
                        raise ValueError(f"scene {scene.name!r}: relation word {w!r} is not a member")


# -- loading ---------------------------------------------------------------------


class _Reader:
    def __init__(self, source: str):
        self.source = source

    def fail(self, node, message, cls=KBSchemaError):
        mark = getattr(node, "start_mark", None)
        if mark is None:
            raise cls(message, self.source)
        raise cls(message, self.source, mark.line + 1, mark.column + 1)

    def mapping(self, node, what) -> dict[str, yaml.Node]:
        if not isinstance(node, yaml.MappingNode):
            self.fail(node, f"{what} must be a mapping")
        out = {}
        for k, v in node.value:
            if not isinstance(k, yaml.ScalarNode):
                self.fail(k, f"{what}: keys must be plain strings")
            if k.value in out:
                self.fail(k, f"{what}: duplicate key {k.value!r}")
            out[k.value] = v
        return out

    def sequence(self, node, what) -> list[yaml.Node]:
        if not isinstance(node, yaml.SequenceNode):
            self.fail(node, f"{what} must be a list")
        return list(node.value)

    def string(self, node, what) -> str:
        if not isinstance(node, yaml.ScalarNode) or node.value == "":
            self.fail(node, f"{what} must be a non-empty string")
        return node.value

    def number(self, node, what) -> float:
        if isinstance(node, yaml.ScalarNode):
            try:
                value = float(node.value)
            except ValueError:
                pass
            else:
                if value == value and abs(value) != float("inf"):
                    return value
        self.fail(node, f"{what} must be a finite number")

    def keys(self, node, fields, what, required, allowed):
        for k in required:
            if k not in fields:
                self.fail(node, f"{what}: missing key {k!r}")
        for k in fields:
            if k not in allowed:
                self.fail(fields[k], f"{what}: unknown key {k!r}")


def _read_predicate(r: _Reader, node, what) -> AttributePredicate:
    f = r.mapping(node, what)
    r.keys(node, f, what, ("attribute", "lo", "hi"), ("attribute", "lo", "hi", "weight"))
    attr = r.string(f["attribute"], f"{what}.attribute")
    if attr not in ATTRIBUTES:
        r.fail(f["attribute"], f"{what}: unknown attribute {attr!r} (known: {', '.join(ATTRIBUTES)})")
    lo = r.number(f["lo"], f"{what}.lo")
    hi = r.number(f["hi"], f"{what}.hi")
    if lo > hi:
        r.fail(f["lo"], f"{what}: range lo {lo} > hi {hi}", KBRangeError)
    weight = 1.0
    if "weight" in f:
        weight = r.number(f["weight"], f"{what}.weight")
        if weight <= 0:
            r.fail(f["weight"], f"{what}: weight must be > 0", KBRangeError)
    return AttributePredicate(attr, lo, hi, weight)


def parse_kb(text: str, source: str = "<kb>") -> KnowledgeBase:
    r = _Reader(source)
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line, col = (mark.line + 1, mark.column + 1) if mark else (None, None)
        raise KBSchemaError(f"invalid YAML: {getattr(exc, 'problem', exc)}", source, line, col) from None
    if root is None:
        return KnowledgeBase({})
    top = r.mapping(root, "knowledge base")
    r.keys(root, top, "knowledge base", (), ("author", "version", "prototypes", "scenes"))
    author = r.string(top["author"], "author") if "author" in top else None
    version = r.string(top["version"], "version") if "version" in top else None

    prototypes: dict[str, ObjectPrototype] = {}
    for i, pnode in enumerate(r.sequence(top["prototypes"], "prototypes") if "prototypes" in top else []):
        what = f"prototypes[{i}]"
        f = r.mapping(pnode, what)
        r.keys(pnode, f, what, ("word", "predicates"), ("word", "predicates"))
        word = r.string(f["word"], f"{what}.word")
        if word in prototypes:
            r.fail(f["word"], f"{what}: duplicate prototype for word {word!r}")
        preds = r.sequence(f["predicates"], f"{what}.predicates")
        if not preds:
            r.fail(f["predicates"], f"{what}: prototype {word!r} has an empty predicate list")
        prototypes[word] = ObjectPrototype(
            word, tuple(_read_predicate(r, p, f"{what}.predicates[{j}]") for j, p in enumerate(preds))
        )

    scenes = []
    for i, snode in enumerate(r.sequence(top["scenes"], "scenes") if "scenes" in top else []):
        what = f"scenes[{i}]"
        f = r.mapping(snode, what)
        r.keys(snode, f, what, ("name", "members"), ("name", "members", "relations"))
        name = r.string(f["name"], f"{what}.name")
        members = []
        for j, m in enumerate(r.sequence(f["members"], f"{what}.members")):
            word = r.string(m, f"{what}.members[{j}]")
            if word not in prototypes:
                r.fail(m, f"{what}: member word {word!r} has no prototype", KBReferenceError)
            if word in members:
                r.fail(m, f"{what}: word {word!r} listed twice")
            members.append(word)
        if not members:
            r.fail(f["members"], f"{what}: scene {name!r} has no members")
        rels = []
        for j, t in enumerate(r.sequence(f["relations"], f"{what}.relations") if "relations" in f else []):
            parts = r.sequence(t, f"{what}.relations[{j}]")
            if len(parts) != 3:
                r.fail(t, f"{what}.relations[{j}] must be [word, relation, word]")
            a, rel, b = (r.string(p, f"{what}.relations[{j}]") for p in parts)
            if rel not in RELATIONS:
                r.fail(parts[1], f"{what}: unknown relation {rel!r} (known: {', '.join(RELATIONS)})")
            for w, p in ((a, parts[0]), (b, parts[2])):
                if w not in members:
                    r.fail(p, f"{what}: relation word {w!r} is not a scene member", KBReferenceError)
            rels.append((a, rel, b))
        scenes.append(SceneNode(name, tuple(members), tuple(rels)))
    return KnowledgeBase(prototypes, tuple(scenes), author, version)


def load_kb(path) -> KnowledgeBase:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UnreadableFileError(f"{path}: {exc.strerror or exc}") from exc
    except UnicodeDecodeError as exc:
        raise KBSchemaError(f"not UTF-8 text: {exc}", str(path)) from exc
    return parse_kb(text, str(path))


# -- matching ---------------------------------------------------------------------


@dataclass(frozen=True)
class Candidate:
    word: str
    score: float


def rank(candidates: Sequence[Candidate]) -> list[Candidate]:
    """Descending score, ties by word."""
    return sorted(candidates, key=lambda c: (-c.score, c.word))


def match_region(
    desc: RegionDescriptor, image_dims: ImageDims, kb: KnowledgeBase, threshold: float = DEFAULT_MATCH_THRESHOLD
) -> list[Candidate]:
    """Words whose prototype scores at least ``threshold`` on ``desc``, ranked."""
    out = []
    for word, proto in kb.prototypes.items():
        s = proto.score(desc, image_dims)
        if s >= threshold and s > 0:
            out.append(Candidate(word, s))
    return rank(out)


# -- context verification ---------------------------------------------------------


@dataclass
class Annotation:
    region: int
    candidates: list[Candidate]
    word: str | None = None
    scene: str | None = None
    similarity: float = 0.0
    context_score: float = 0.0


@dataclass
class SceneMatch:
    scene: str
    assignment: dict[str, int | None]
    similarity: float
    context_score: float
    objective: float
    accepted: bool


@dataclass
class AnnotationSet:
    annotations: list[Annotation] = field(default_factory=list)
    match: SceneMatch | None = None

    def words(self) -> dict[int, str]:
        return {a.region: a.word for a in self.annotations if a.word is not None}


class _Relations:
    """Evaluates relation constraints on level-0 regions of a stack."""

    def __init__(self, stack: DescriptionStack):
        self.base = stack.base.by_label()
        self.ancestors: dict[int, set[int]] = {}
        by_level = {lv.level: lv.by_label() for lv in stack.levels}
        for lab, d in self.base.items():
            chain = set()
            level, parent = 0, d.parent_label
            while parent is not None and level + 1 in by_level:
                level += 1
                chain.add(parent)
                up = by_level[level].get(parent)
                parent = up.parent_label if up is not None else None
            chain.discard(lab)
            self.ancestors[lab] = chain

    def holds(self, a: int, rel: str, b: int) -> bool:
        da, db = self.base[a], self.base[b]
        if rel == "adjacent":
            return b in da.adjacent
        if rel == "sub-part-of":
            return b in self.ancestors[a]
        return relation(da, db) == rel


def _objective(sim_total: Fraction, n_members: int, satisfied: int, n_constraints: int) -> Fraction:
    context = Fraction(satisfied, n_constraints) if n_constraints else Fraction(1)
    return sim_total / n_members * context


def _score_assignment(scene: SceneNode, regions, sims, rels: _Relations):
    chosen = dict(zip(scene.members, regions))
    sim_total = sum((sims[w][r] for w, r in chosen.items() if r is not None), Fraction(0))
    sat = sum(
        1
        for a, rel, b in scene.relations
        if chosen[a] is not None and chosen[b] is not None and rels.holds(chosen[a], rel, chosen[b])
    )
    return sim_total, sat


def _scene_options(scene: SceneNode, candidates: Mapping[int, Sequence[Candidate]]):
    sims: dict[str, dict[int, Fraction]] = {w: {} for w in scene.members}
    for region in sorted(candidates):
        for c in candidates[region]:
            if c.word in sims:
                sims[c.word][region] = Fraction(c.score)
    options = [sorted(sims[w]) + [None] for w in scene.members]
    return sims, options


def _search_exhaustive(scene, sims, options, rels):
    """Branch-and-bound over injective assignments in lexicographic order.

    The first assignment reaching the best objective is kept, which makes
    ties resolve to the lexicographically smallest region tuple (unassigned
    words sort last).
    """
    n = len(scene.members)
    n_c = len(scene.relations)
    best_sim = [max(sims[w].values(), default=Fraction(0)) for w in scene.members]
    tail = [sum(best_sim[i:], Fraction(0)) for i in range(n + 1)]
    best: list = [None, None]  # objective, regions
    chosen: list = []

    def visit(i, sim_so_far, used):
        if best[0] is not None and (sim_so_far + tail[i]) / n <= best[0]:
            return
        if i == n:
            _, sat = _score_assignment(scene, chosen, sims, rels)
            obj = _objective(sim_so_far, n, sat, n_c)
            if best[0] is None or obj > best[0]:
                best[0], best[1] = obj, list(chosen)
            return
        word = scene.members[i]
        for region in options[i]:
            if region is not None and region in used:
                continue
            chosen.append(region)
            if region is None:
                visit(i + 1, sim_so_far, used)
            else:
                used.add(region)
                visit(i + 1, sim_so_far + sims[word][region], used)
                used.discard(region)
            chosen.pop()

    visit(0, Fraction(0), set())
    return best[1]


def _search_greedy(scene, sims):
    order = sorted(
        range(len(scene.members)),
        key=lambda i: (-max(sims[scene.members[i]].values(), default=Fraction(0)), i),
    )
    used: set[int] = set()
    regions: list[int | None] = [None] * len(scene.members)
    for i in order:
        free = [(s, r) for r, s in sims[scene.members[i]].items() if r not in used]
        if free:
            _, r = min(free, key=lambda t: (-t[0], t[1]))
            regions[i] = r
            used.add(r)
    return regions


def best_assignment(
    scene: SceneNode,
    candidates: Mapping[int, Sequence[Candidate]],
    stack: DescriptionStack,
    exhaustive_limit: int = EXHAUSTIVE_LIMIT,
) -> tuple[dict[str, int | None], Fraction, Fraction, Fraction]:
    """Best word -> region assignment for one scene.

    Returns (assignment, mean similarity, context score, objective) where the
    objective is mean similarity times context score and unassigned words
    count as similarity 0. Scenes with more than ``exhaustive_limit`` members
    are solved greedily (words by descending best similarity, each taking its
    most similar free region), so optimality is only guaranteed up to the
    limit.
    """
    rels = _Relations(stack)
    sims, options = _scene_options(scene, candidates)
    if len(scene.members) <= exhaustive_limit:
        regions = _search_exhaustive(scene, sims, options, rels)
    else:
        regions = _search_greedy(scene, sims)
    sim_total, sat = _score_assignment(scene, regions, sims, rels)
    n, n_c = len(scene.members), len(scene.relations)
    context = Fraction(sat, n_c) if n_c else Fraction(1)
    return dict(zip(scene.members, regions)), sim_total / n, context, _objective(sim_total, n, sat, n_c)


def verify_context(
    candidates: Mapping[int, Sequence[Candidate]],
    stack: DescriptionStack,
    kb: KnowledgeBase,
    context_threshold: float = DEFAULT_CONTEXT_THRESHOLD,
    exhaustive_limit: int = EXHAUSTIVE_LIMIT,
) -> AnnotationSet:
    """Pick the scene and assignment maximizing mean similarity x context.

    Ties between scenes go to the one listed first in the KB. Words are
    attached to regions only if the winner's context score reaches
    ``context_threshold``.
    """
    annotations = {r: Annotation(r, list(c)) for r, c in sorted(candidates.items())}
    winner = None
    for scene in kb.scenes:
        assignment, sim, ctx, obj = best_assignment(scene, candidates, stack, exhaustive_limit)
        if obj > 0 and (winner is None or obj > winner[3]):
            winner = (scene, assignment, sim, obj, ctx)
    if winner is None:
        return AnnotationSet(list(annotations.values()))
    scene, assignment, sim, obj, ctx = winner
    accepted = ctx >= Fraction(context_threshold)
    match = SceneMatch(scene.name, assignment, float(sim), float(ctx), float(obj), accepted)
    if accepted:
        for word, region in assignment.items():
            if region is None:
                continue
            ann = annotations[region]
            ann.word = word
            ann.scene = scene.name
            ann.similarity = next(c.score for c in ann.candidates if c.word == word)
            ann.context_score = float(ctx)
    return AnnotationSet(list(annotations.values()), match)


def annotate(
    stack: DescriptionStack,
    kb: KnowledgeBase,
    match_threshold: float = DEFAULT_MATCH_THRESHOLD,
    context_threshold: float = DEFAULT_CONTEXT_THRESHOLD,
) -> AnnotationSet:
    """Match every level-0 region against the KB, then verify in context."""
    dims = (stack.width, stack.height)
    candidates = {d.label: match_region(d, dims, kb, match_threshold) for d in stack.base.regions}
    return verify_context(candidates, stack, kb, context_threshold)
