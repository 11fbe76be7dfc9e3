"""End-to-end runs: contact inference, placement, rotation choice, refinement and evaluation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from scipy.spatial.transform import Rotation

from .config import PipelineConfig
from .contact import (
    ContactSet,
    PartAnnotation,
    lift_mask_to_3d,
    merge_selected_parts,
    nearest_within,
    point_anchor,
    should_infer_points,
)
from .errors import DegenerateForceAxis, DexGraspError, InputError, NoFeasibleRotation, StageError
from .evaluation.batch import TaskMetrics, evaluate_grasp, write_tables
from .evaluation.metrics import MetricReport
from .fixtures import get_fixture
from .geometry.cloud import OrientedPointCloud, load_features, sample_surface
from .geometry.hull import convex_hull, expand_hull
from .geometry.mesh import TriMesh, load_mesh, write_obj
from .hand.grasp_types import GraspLibrary, default_library
from .hand.kinematics import GraspPose, HandKinematics, clamp_to_limits
from .hand.model import default_hand, forward_kinematics, hand_mesh
from .reasoner.backends import ReasonerBackend, StageRouter, make_backend
from .reasoner.directions import (
    build_direction_set,
    generate_rotation_candidates,
    initial_position,
    optimal_palm_direction,
)
from .reasoner.stages import (
    select_contact_parts,
    select_contact_points,
    select_direction,
    select_grasp_type,
    select_rotation,
)
from .reasoner.transcript import StageTranscript
from .refine.energies import ContactTargets
from .refine.optimizer import OptimizeResult, optimize
from .render.camera import PinholeCamera
from .render.io import save_depth, save_png
from .render.prompts import point_overlay, render_imagination, sample_mask_contour, som_overlay
from .render.raster import RenderResult, render
from .verification import (
    filter_rotation_candidates,
    local_normals,
    nearest_contact_surface_point,
    validate_point_contacts,
)

RESULT_FILE = "result.json"
TRANSCRIPT_FILE = "transcript.json"
PROMPTS_FILE = "prompts.json"
POINT_RETRY_NOTE = "The previous pair cannot squeeze the object: choose points on opposing sides."


# ---------------------------------------------------------------- task and result records


@dataclass
class TaskSpec:
    name: str
    instruction: str
    mesh_path: Optional[Path] = None
    annotations: Optional[Path] = None
    features: Optional[Path] = None
    gt_parts: Tuple[str, ...] = ()
    twist: bool = False
    camera: Optional[dict] = None  # None = auto-frame
    force_point_level: bool = False
    mesh: Optional[TriMesh] = None

    def __post_init__(self):
        if not self.instruction or not self.instruction.strip():
            raise InputError(f"task '{self.name}' has an empty instruction")
        if self.mesh is None:
            if self.mesh_path is None or not Path(self.mesh_path).is_file():
                raise InputError(f"task '{self.name}': mesh file not found: {self.mesh_path}")

    def load_mesh(self) -> TriMesh:
        if self.mesh is None:
            self.mesh = load_mesh(self.mesh_path)
        return self.mesh

    @classmethod
    def from_fixture(cls, name: str) -> "TaskSpec":
        fx = get_fixture(name)
        return cls(fx.name, fx.instruction, gt_parts=tuple(fx.gt_parts), twist=fx.twist,
                   force_point_level=fx.force_point_level, mesh=fx.mesh)

    @classmethod
    def load(cls, path) -> "TaskSpec":
        path = Path(path)
        if str(path).startswith("fixture:"):
            return cls.from_fixture(str(path).split(":", 1)[1])
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read task file {path}: {exc}") from exc
        base = path.parent

        def rel(key):
            return None if d.get(key) in (None, "") else base / d[key]

        camera = d.get("camera")
        return cls(d.get("name", path.stem), d.get("instruction", ""), rel("mesh"), rel("annotations"),
                   rel("features"), tuple(d.get("gt_parts", ())), bool(d.get("twist", False)),
                   None if camera in (None, "auto", "auto-frame") else camera,
                   bool(d.get("force_point_level", False)))


@dataclass
class GraspResult:
    task: str
    final: GraspPose
    initial: GraspPose
    contacts: Dict[str, Any]
    selections: Dict[str, Any]
    energy: Dict[str, Any]
    initial_energy: Dict[str, Any]
    best_iteration: int
    metrics: Optional[MetricReport] = None
    transcript: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "task": self.task, "final": self.final.to_dict(), "initial": self.initial.to_dict(),
            "contacts": self.contacts, "selections": self.selections, "energy": self.energy,
            "initial_energy": self.initial_energy, "best_iteration": self.best_iteration,
            "metrics": None if self.metrics is None else self.metrics.to_dict(),
            "transcript": self.transcript,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d) -> "GraspResult":
        return cls(d["task"], GraspPose.from_dict(d["final"]), GraspPose.from_dict(d["initial"]),
                   d["contacts"], d["selections"], d["energy"], d["initial_energy"], int(d["best_iteration"]),
                   None if d.get("metrics") is None else MetricReport.from_dict(d["metrics"]),
                   d.get("transcript"))

    @classmethod
    def load(cls, path) -> "GraspResult":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise InputError(f"cannot read grasp result {path}: {exc}") from exc

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json(), encoding="utf-8")
        return path


# ---------------------------------------------------------------- scene preparation


@dataclass
class Scene:
    task: TaskSpec
    mesh: TriMesh
    cloud: OrientedPointCloud
    camera: PinholeCamera
    view: RenderResult
    annotation: PartAnnotation
    images: Dict[str, np.ndarray] = field(default_factory=dict)


def prepare_scene(task: TaskSpec, cfg: PipelineConfig) -> Scene:
    mesh = task.load_mesh()
    cloud = sample_surface(mesh, cfg.sample_count, seed=cfg.seed)
    if task.features is not None:
        feats = load_features(task.features)
        if len(feats) != len(cloud):
            raise InputError(f"feature file has {len(feats)} rows for {len(cloud)} points")
        cloud = cloud.with_features(feats)
    if task.camera is not None:
        camera = PinholeCamera.from_dict(task.camera)
    else:
        rc = cfg.render
        camera = PinholeCamera.auto_frame(mesh.vertices, rc.view, rc.fill, rc.width, rc.height, rc.focal)
    view = render([mesh], camera)
    if task.annotations is not None:
        annotation = PartAnnotation.load(task.annotations)
    else:
        annotation = PartAnnotation.from_render(view, mesh)
    if len(annotation) == 0:
        raise InputError("part annotation has no regions")
    return Scene(task, mesh, cloud, camera, view, annotation, {"object.png": view.color})


def snap_to_support(xy, valid) -> np.ndarray:
    """Move each pixel point onto the nearest pixel of ``valid``."""
    _, (rows, cols) = ndimage.distance_transform_edt(~valid, return_indices=True)
    out = []
    for x, y in np.asarray(xy, dtype=float):
        r = int(np.clip(round(y), 0, valid.shape[0] - 1))
        c = int(np.clip(round(x), 0, valid.shape[1] - 1))
        out.append((float(cols[r, c]), float(rows[r, c])))
    return np.array(out)


# ---------------------------------------------------------------- stages


def infer_contacts(scene: Scene, backend, transcript, cfg: PipelineConfig, kin=None) -> ContactSet:
    ann, view, cam, obj = scene.annotation, scene.view, scene.camera, scene.cloud
    som = som_overlay(view.color, ann.as_pairs())
    scene.images["som.png"] = som
    regions = [(r.id, r.name) for r in ann.regions]
    hand_ids, func_ids, thumb_part, index_part = select_contact_parts(
        backend, transcript, som, regions, scene.task.instruction)
    lift = cfg.contact.lift()
    m_hand = merge_selected_parts(ann, hand_ids)
    m_func = merge_selected_parts(ann, func_ids)
    hand_idx = lift_mask_to_3d(m_hand, view.depth, cam, obj, lift)
    func_idx = hand_idx if sorted(hand_ids) == sorted(func_ids) else lift_mask_to_3d(m_func, view.depth, cam, obj, lift)
    prov: Dict[str, Any] = {"hand_regions": hand_ids, "functional_regions": func_ids,
                            "thumb_part": thumb_part, "index_part": index_part, "point_level": "skipped"}
    thumb = index = None
    force = cfg.contact.force_point_level or scene.task.force_point_level
    want = should_infer_points(thumb_part, index_part, force)
    if want and not cfg.contact.skip_point_level:
        marks = sample_mask_contour(m_func, cfg.contact.contour_points)
        marks.xy = snap_to_support(marks.xy, m_func & (view.depth > 0))
        img = point_overlay(view.color, marks)
        scene.images["points.png"] = img
        vc = cfg.verification
        cands = []
        for (x, y), mid in zip(marks.xy, marks.ids):
            p = point_anchor((x, y), view.depth, cam)
            _, nrm = local_normals(obj, p, vc.radius, vc.max_neighbors)
            cands.append({"id": int(mid), "pixel": [x, y], "point": p.tolist(), "normals": nrm.tolist()})
        by_id = {c["id"]: c for c in cands}
        prov["point_level"] = "rejected"
        note = ""
        for attempt in range(2):
            t_id, i_id = select_contact_points(backend, transcript, img, cands, scene.task.instruction, note)
            t, i = by_id[t_id], by_id[i_id]
            try:
                ok = validate_point_contacts(t["point"], i["point"], t["normals"], i["normals"], vc.tau_m)
            except DegenerateForceAxis:
                ok = False
            prov.setdefault("point_attempts", []).append({"thumb": t_id, "index": i_id, "valid": ok})
            if ok:
                thumb = nearest_within(obj, t["point"], lift.point_radius)
                index = nearest_within(obj, i["point"], lift.point_radius)
                prov["point_level"] = "used"
                break
            note = POINT_RETRY_NOTE
    cs = ContactSet(hand_idx, func_idx, thumb, index, prov)
    cs.validate(len(obj))
    return cs


def functional_targets(cs: ContactSet) -> np.ndarray:
    if cs.has_points:
        return np.unique(np.concatenate([cs.thumb, cs.index]))
    return cs.functional


@dataclass
class Placement:
    center: np.ndarray
    label: str
    direction: np.ndarray
    translation: np.ndarray
    grasp_type: str
    theta: np.ndarray


def place_hand(scene: Scene, cs: ContactSet, backend, transcript, cfg: PipelineConfig,
               library: GraspLibrary) -> Placement:
    obj = scene.cloud
    center = obj.points[cs.hand].mean(axis=0)
    dirs = build_direction_set(scene.camera.center, center, cfg.reasoner.world_up)
    mean_normal = obj.normals[cs.hand].mean(axis=0)
    label, d = select_direction(backend, transcript, scene.view.color, dirs, scene.task.instruction, mean_normal)
    hull = expand_hull(convex_hull(obj.points), cfg.reasoner.hull_offset)
    t = initial_position(center, d, hull)
    func = obj.points[functional_targets(cs)]
    extent = float(np.max(func.max(axis=0) - func.min(axis=0)))
    gt = select_grasp_type(backend, transcript, library, scene.task.instruction, extent)
    return Placement(center, label, d, t, gt.name, gt.theta.copy())


def natural_theta(kin: HandKinematics) -> np.ndarray:
    return clamp_to_limits(kin, np.zeros(len(kin.limits)))


def choose_rotation(scene: Scene, cs: ContactSet, placement: Placement, backend, transcript,
                    cfg: PipelineConfig, kin: HandKinematics) -> Tuple[GraspPose, Dict[str, Any]]:
    obj, vc = scene.cloud, cfg.verification
    palm = optimal_palm_direction(placement.direction)
    theta0 = natural_theta(kin)
    filtering = vc.always_filter or not cs.has_points
    normals = None
    if filtering:
        _, normals = nearest_contact_surface_point(placement.center, placement.direction, obj, vc)
    k = cfg.reasoner.rotations
    for attempt in range(2):
        cands = generate_rotation_candidates(kin, theta0, placement.translation, palm, k)
        keep = filter_rotation_candidates(kin, cands, normals, vc.tau_n) if filtering else list(range(k))
        if keep:
            break
        k *= 2
    else:
        raise NoFeasibleRotation(f"no rotation survived verification with K up to {k // 2}")
    targets = obj.subset(functional_targets(cs))
    scores = []
    for i in keep:
        pose = cands[i].with_theta(placement.theta)
        surf = forward_kinematics(kin, pose)
        d, _ = targets.tree.query(surf.vertices[surf.functional])
        scores.append(float(d.mean()))
    labels = [str(i + 1) for i in keep]
    composite = render_imagination([hand_mesh(kin, cands[i]) for i in keep[:12]], scene.mesh, scene.camera,
                                   labels[:12], cfg.render.imagination_scale)
    scene.images["imagination.png"] = composite.image
    chosen = select_rotation(backend, transcript, composite.image, labels[:12], scores[:12], scene.task.instruction)
    pick = cands[int(chosen) - 1]
    info = {"candidates": k, "survivors": labels, "rotation": chosen, "filtered": filtering}
    return GraspPose(pick.translation, pick.quaternion, placement.theta), info


# ---------------------------------------------------------------- commands


def build_backend(cfg: PipelineConfig, kind: Optional[str] = None) -> ReasonerBackend:
    bc = cfg.backend
    settings = {"fixture_path": bc.fixture_path, **bc.http}
    default = make_backend(kind or bc.default, settings, cfg.seed)
    if kind is not None:
        return default
    per_stage = {s: make_backend(k, settings, cfg.seed) for s, k in bc.stages.items() if k != bc.default}
    return StageRouter(default, per_stage) if per_stage else default


def _stage(name, transcript, tpath):
    class _Guard:
        def __enter__(self):
            return self

        def __exit__(self, et, exc, tb):
            if exc is not None and isinstance(exc, DexGraspError) and not isinstance(exc, StageError):
                transcript.save(tpath)
                raise StageError(name, exc, str(tpath)) from exc
            return False

    return _Guard()


def _write_images(scene: Scene, out: Path) -> None:
    for name, img in sorted(scene.images.items()):
        save_png(out / name, img)
    save_depth(out / "object.depth", scene.view.depth)


def cmd_plan(task: TaskSpec, cfg: PipelineConfig, out_dir, backend: Optional[ReasonerBackend] = None,
             evaluate: bool = True) -> GraspResult:
    """Run all stages for one task and write result, hand mesh, trace and transcript to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tpath = out / TRANSCRIPT_FILE
    backend = backend or build_backend(cfg)
    kin = default_hand()
    library = default_library()
    library.validate(kin)
    transcript = StageTranscript(meta={"task": task.name, "seed": cfg.seed})
    with _stage("prepare", transcript, tpath):
        scene = prepare_scene(task, cfg)
    with _stage("contact_inference", transcript, tpath):
        cs = infer_contacts(scene, backend, transcript, cfg, kin)
    with _stage("placement", transcript, tpath):
        placement = place_hand(scene, cs, backend, transcript, cfg, library)
    with _stage("rotation", transcript, tpath):
        initial, rot_info = choose_rotation(scene, cs, placement, backend, transcript, cfg, kin)
    with _stage("refinement", transcript, tpath):
        targets = ContactTargets.from_indices(scene.cloud, functional_targets(cs), cs.hand)
        res = optimize(kin, initial, targets, scene.cloud, cfg.weights, cfg.optimizer, cfg.seed)
    metrics = None
    if evaluate:
        with _stage("evaluation", transcript, tpath):
            metrics = evaluate_grasp(kin, res.pose, scene.mesh, scene.cloud, task.gt_parts, task.twist,
                                     cfg.simulation)
    selections = {"direction": placement.label, "direction_vector": placement.direction.tolist(),
                  "contact_center": placement.center.tolist(), "grasp_type": placement.grasp_type,
                  **rot_info}
    result = GraspResult(task.name, res.pose, initial, cs.to_dict(), selections, res.energy.to_dict(),
                         res.initial_energy.to_dict(), res.best_iteration, metrics, TRANSCRIPT_FILE)
    transcript.save(tpath)
    result.save(out / RESULT_FILE)
    write_obj(hand_mesh(kin, res.pose), out / "hand.obj")
    res.write_trace(out / "trace.jsonl")
    _write_images(scene, out)
    return result


def ablation_initial(kin: HandKinematics, cs: ContactSet, obj: OrientedPointCloud, seed: int) -> GraspPose:
    """Initial grasp without reasoning: random rotation, contact-region centre, extended fingers."""
    center = obj.points[cs.hand].mean(axis=0)
    rot = Rotation.random(random_state=np.random.default_rng(seed))
    return GraspPose(center, rot.as_quat(), natural_theta(kin))


def cmd_refine(initial_path, contacts_path, task: TaskSpec, cfg: PipelineConfig, out_dir,
               ablation: bool = False, evaluate: bool = True) -> GraspResult:
    """Refinement only, from a saved initial grasp (or the ablation initialiser) and contact set."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kin = default_hand()
    mesh = task.load_mesh()
    obj = sample_surface(mesh, cfg.sample_count, seed=cfg.seed)
    try:
        cdata = json.loads(Path(contacts_path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read contact set {contacts_path}: {exc}") from exc
    cdata = cdata.get("contacts", cdata)
    cs = ContactSet(cdata["hand"], cdata["functional"], cdata.get("thumb"), cdata.get("index"),
                    cdata.get("provenance", {}))
    cs.validate(len(obj))
    if ablation:
        initial = ablation_initial(kin, cs, obj, cfg.seed)
    else:
        initial = _load_pose(initial_path)
    targets = ContactTargets.from_indices(obj, functional_targets(cs), cs.hand)
    res: OptimizeResult = optimize(kin, initial, targets, obj, cfg.weights, cfg.optimizer, cfg.seed)
    metrics = evaluate_grasp(kin, res.pose, mesh, obj, task.gt_parts, task.twist, cfg.simulation) if evaluate else None
    result = GraspResult(task.name, res.pose, initial, cs.to_dict(), {"ablation_initial": bool(ablation)},
                         res.energy.to_dict(), res.initial_energy.to_dict(), res.best_iteration, metrics, None)
    result.save(out / RESULT_FILE)
    write_obj(hand_mesh(kin, res.pose), out / "hand.obj")
    res.write_trace(out / "trace.jsonl")
    return result


def _load_pose(path) -> GraspPose:
    if path is None:
        raise InputError("refine needs an initial grasp file unless the ablation initialiser is used")
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read initial grasp {path}: {exc}") from exc
    if "initial" in d and "final" in d:
        d = d["initial"]
    try:
        return GraspPose.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"initial grasp {path} is malformed: {exc}") from exc


def cmd_evaluate(results_dir, tasks: Sequence[TaskSpec], cfg: PipelineConfig, out_dir=None):
    """Recompute metrics for ``<results_dir>/<task>/result.json`` and write the tables."""
    root = Path(results_dir)
    kin = default_hand()
    rows: List[TaskMetrics] = []
    for task in tasks:
        res = GraspResult.load(root / task.name / RESULT_FILE)
        mesh = task.load_mesh()
        obj = sample_surface(mesh, cfg.sample_count, seed=cfg.seed)
        rep = evaluate_grasp(kin, res.final, mesh, obj, task.gt_parts, task.twist, cfg.simulation)
        rows.append(TaskMetrics(task.name, rep, task.twist))
    return write_tables(rows, out_dir or root)


def cmd_render_prompts(task: TaskSpec, cfg: PipelineConfig, out_dir,
                       backend: Optional[ReasonerBackend] = None) -> List[Path]:
    """Write the part overlay, the numbered contour points and an unfiltered imagination composite."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    backend = backend or build_backend(cfg)
    kin = default_hand()
    transcript = StageTranscript(meta={"task": task.name, "seed": cfg.seed})
    scene = prepare_scene(task, cfg)
    scene.images["som.png"] = som_overlay(scene.view.color, scene.annotation.as_pairs())
    regions = [(r.id, r.name) for r in scene.annotation.regions]
    hand_ids, func_ids, _, _ = select_contact_parts(backend, transcript, scene.images["som.png"], regions,
                                                    task.instruction)
    m_func = merge_selected_parts(scene.annotation, func_ids)
    marks = sample_mask_contour(m_func, cfg.contact.contour_points)
    marks.xy = snap_to_support(marks.xy, m_func & (scene.view.depth > 0))
    scene.images["points.png"] = point_overlay(scene.view.color, marks)
    lift = cfg.contact.lift()
    hand_idx = lift_mask_to_3d(merge_selected_parts(scene.annotation, hand_ids), scene.view.depth,
                               scene.camera, scene.cloud, lift)
    cs = ContactSet(hand_idx, hand_idx)
    placement = place_hand(scene, cs, backend, transcript, cfg, default_library())
    cands = generate_rotation_candidates(kin, natural_theta(kin), placement.translation,
                                         optimal_palm_direction(placement.direction), cfg.reasoner.rotations)
    comp = render_imagination([hand_mesh(kin, c) for c in cands], scene.mesh, scene.camera,
                              scale=cfg.render.imagination_scale)
    scene.images["imagination.png"] = comp.image
    scene.annotation.save(out / "annotation")
    _write_images(scene, out)
    manifest = {"som_regions": [rid for rid, _ in regions],
                "points": [{"id": int(i), "xy": [float(x), float(y)]} for i, (x, y) in zip(marks.ids, marks.xy)],
                "imagination": {"grid": list(comp.grid), "labels": list(comp.labels)}}
    (out / PROMPTS_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    transcript.save(out / TRANSCRIPT_FILE)
    return sorted(out.glob("*.png"))
