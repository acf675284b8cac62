"""Synthetic articulated-skeleton data: forward kinematics, orthographic
stick-figure rendering, and a reproducible on-disk dataset format.

Dataset directory layout::

    manifest.txt            key=value lines (generation parameters, file hashes)
    skeleton.json           the SkeletonModel used
    train_poses.bin         (n, 3J) float64
    train_images.bin        (n, 1, H, W) float64 or uint8
    train_labels.csv        sample_id,subject,action
    test_poses.bin, test_images.bin, test_labels.csv

Array files: 8-byte magic ``b"LPARRAY\\0"``, uint32 version, 1-byte dtype
code (``d`` float64, ``B`` uint8), 1-byte ndim, 2 zero bytes, ndim uint32
dims, then row-major little-endian data.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import DimensionError, FormatError, ParameterError, RangeError
from .numerics import RngStream

ARRAY_MAGIC = b"LPARRAY\x00"
FIXED = -(2**31)  # coupling code for an angle pinned at its lower bound
FORMAT_VERSION = 1


def rotation(angles: np.ndarray) -> np.ndarray:
    """Rz(c) @ Ry(b) @ Rx(a) for angles (a, b, c)."""
    a, b, c = angles
    ca, sa, cb, sb, cc, sc = math.cos(a), math.sin(a), math.cos(b), math.sin(b), math.cos(c), math.sin(c)
    rx = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
    ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    rz = np.array([[cc, -sc, 0], [sc, cc, 0], [0, 0, 1]])
    return rz @ ry @ rx


@dataclass
class SkeletonModel:
    """Joint tree. Joint ``j``'s bone runs from ``parents[j]`` along
    ``rest_dirs[j]`` (in the parent's frame, after the joint's own rotation)
    for ``lengths[j]`` mm. ``angle_ranges[action]`` is (J, 3, 2): per joint
    min/max Euler angles in radians; the root's entry sets global orientation.
    ``angle_coupling[action]`` (J, 3) maps each angle to a shared control
    (see :func:`sample_angles`); actions without one sample every angle
    independently.
    """

    joint_names: list[str]
    parents: list[int]
    lengths: list[float]
    rest_dirs: list[tuple[float, float, float]]
    angle_ranges: dict[str, list]
    limb_names: list[str]
    partitions: dict[str, list[int]]
    limb_intensity: list[float] = field(default_factory=list)
    angle_coupling: dict[str, list] = field(default_factory=dict)

    def coupling(self, action: str) -> np.ndarray:
        """(J, 3) control index per angle; independent controls when unset."""
        if action in self.angle_coupling:
            return np.asarray(self.angle_coupling[action], dtype=int)
        return np.arange(self.n_joints * 3).reshape(self.n_joints, 3)

    def __post_init__(self):
        J = len(self.parents)
        if self.parents[0] != -1:
            raise ParameterError("joint 0 must be the root (parent -1)")
        for j in range(1, J):
            if not 0 <= self.parents[j] < j:
                raise ParameterError(f"joint {j} parent {self.parents[j]} must precede it")
            if self.lengths[j] <= 0:
                raise ParameterError(f"limb to joint {self.joint_names[j]!r} has non-positive length")
        if not self.angle_ranges:
            raise ParameterError("at least one action angle preset is required")
        for action, ranges in self.angle_ranges.items():
            arr = np.asarray(ranges, float)
            if arr.shape != (J, 3, 2) or np.any(arr[..., 0] > arr[..., 1]):
                raise ParameterError(f"angle ranges for {action!r} must be (J, 3, 2) with min <= max")
        for action, coup in self.angle_coupling.items():
            if action not in self.angle_ranges or np.shape(coup) != (J, 3):
                raise ParameterError(f"angle coupling for {action!r} must be (J, 3) and match a preset")
        if len(self.limb_names) != J - 1:
            raise ParameterError("one limb name per non-root joint is required")
        if not self.limb_intensity:
            self.limb_intensity = [1.0] * (J - 1)

    @property
    def n_joints(self) -> int:
        return len(self.parents)

    @property
    def pose_dim(self) -> int:
        return 3 * self.n_joints

    @property
    def limbs(self) -> list[tuple[int, int]]:
        return [(self.parents[j], j) for j in range(1, self.n_joints)]

    @property
    def actions(self) -> list[str]:
        return list(self.angle_ranges)

    def scaled(self, factor: float) -> "SkeletonModel":
        d = asdict(self)
        d["lengths"] = [0.0] + [l * factor for l in self.lengths[1:]]
        return SkeletonModel(**d)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SkeletonModel":
        d = json.loads(text)
        d["rest_dirs"] = [tuple(v) for v in d["rest_dirs"]]
        return cls(**d)


def _preset(J: int, spec: dict[int, Sequence[tuple[float, float, int | None]]]) -> tuple[list, list]:
    """Build (ranges, coupling) from {joint: [(lo, hi, control) per axis]}.

    ``control`` names the shared uniform variable driving that angle; ``~c``
    (i.e. ``-c - 1``) drives it in anti-phase; ``None`` fixes the angle at lo.
    """
    ranges = np.zeros((J, 3, 2))
    coupling = np.full((J, 3), FIXED, dtype=int)
    for j, axes in spec.items():
        for ax, (lo, hi, ctrl) in enumerate(axes):
            ranges[j, ax] = (lo, hi if ctrl is not None else lo)
            coupling[j, ax] = FIXED if ctrl is None else ctrl
    return ranges.tolist(), coupling.tolist()


def _mirror(axes):
    # reflect across the sagittal plane: x-rotation kept, y/z rotations negated
    (ax, bx, cx), (ay, by, cy), (az, bz, cz) = axes
    return [(ax, bx, cx), (-by, -ay, None if cy is None else ~cy), (-bz, -az, None if cz is None else ~cz)]


def _anti(axes):
    return [(lo, hi, None if c is None else ~c) for lo, hi, c in axes]


def default_skeleton() -> SkeletonModel:
    """17-joint human-like tree (z up, x to the subject's left), lengths in mm.

    Each action preset drives its joint angles from a handful of shared
    controls (global yaw, gait phase, torso lean, arm gesture, ...), so poses
    of one action lie on a low-dimensional, strongly coupled family.
    """
    names = ["pelvis", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle",
             "spine", "thorax", "neck", "head",
             "l_shoulder", "l_elbow", "l_wrist", "r_shoulder", "r_elbow", "r_wrist"]
    parents = [-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15]
    lengths = [0.0, 130, 450, 440, 130, 450, 440, 230, 250, 110, 120, 160, 280, 250, 160, 280, 250]
    down, up = (0.0, 0.0, -1.0), (0.0, 0.0, 1.0)
    dirs = [(0.0, 0.0, 0.0), (-1.0, 0.0, 0.0), down, down, (1.0, 0.0, 0.0), down, down,
            up, up, up, up, (1.0, 0.0, 0.0), down, down, (-1.0, 0.0, 0.0), down, down]
    limb_names = ["r_hip", "r_thigh", "r_shin", "l_hip", "l_thigh", "l_shin",
                  "spine", "chest", "neck", "head",
                  "l_clavicle", "l_upper_arm", "l_forearm", "r_clavicle", "r_upper_arm", "r_forearm"]
    intensity = [0.55, 0.55, 0.55, 1.0, 1.0, 1.0, 0.8, 0.8, 0.8, 0.8,
                 1.0, 1.0, 1.0, 0.55, 0.55, 0.55]

    Z = (0.0, 0.0, None)
    YAW = [Z, Z, (-math.pi / 3, math.pi / 3, 0)]

    def build(l_thigh, l_shin, torso, head, l_arm, l_fore, r_thigh=None, r_shin=None, r_arm=None, r_fore=None):
        spec = {
            0: YAW,
            5: l_thigh, 6: l_shin,
            2: _mirror(r_thigh or l_thigh), 3: _mirror(r_shin or l_shin),
            7: torso, 8: torso, 9: head, 10: head,
            12: l_arm, 13: l_fore,
            15: _mirror(r_arm or l_arm), 16: _mirror(r_fore or l_fore),
        }
        return _preset(17, spec)

    # control ids: 0 yaw, 1.. action-specific
    walk_thigh = [(-0.5, 0.5, 1), Z, Z]
    walk_arm = [(-0.5, 0.5, ~1), (-0.15, -0.05, 3), Z]
    walking = build(walk_thigh, [(-0.9, 0.0, 2), Z, Z], [(0.0, 0.15, 3), Z, Z], [(-0.1, 0.2, 4), Z, Z],
                    walk_arm, [(0.0, 0.6, 2), Z, Z],
                    r_thigh=_anti(walk_thigh), r_shin=[(-0.9, 0.0, ~2), Z, Z],
                    r_arm=_anti(walk_arm), r_fore=[(0.0, 0.6, ~2), Z, Z])
    discussion = build([(-0.1, 0.1, 1), Z, Z], [(-0.2, 0.0, 1), Z, Z], [(-0.05, 0.2, 2), Z, Z],
                       [(-0.3, 0.3, 3), Z, (-0.5, 0.5, 3)],
                       [(-0.2, 1.0, 4), (-0.8, 0.0, 5), Z], [(0.3, 1.8, 4), Z, Z],
                       r_arm=[(-0.2, 1.0, 5), (-0.8, 0.0, 4), Z], r_fore=[(0.3, 1.8, 5), Z, Z])
    eating = build([(0.0, 0.2, 1), Z, Z], [(-0.3, 0.0, 1), Z, Z], [(0.1, 0.4, 2), Z, Z], [(0.0, 0.4, 2), Z, Z],
                   [(0.0, 0.6, 3), (-0.3, 0.0, 3), Z], [(1.4, 2.3, 4), Z, Z],
                   r_fore=[(1.4, 2.3, ~4), Z, Z])
    greeting = build([(-0.1, 0.1, 1), Z, Z], [(-0.2, 0.0, 1), Z, Z], [(-0.1, 0.1, 2), Z, Z],
                     [(-0.2, 0.2, 2), Z, (-0.4, 0.4, 3)],
                     [(0.0, 1.2, 4), (-1.6, -0.4, 4), Z], [(0.2, 1.4, 5), Z, Z],
                     r_arm=[(0.0, 0.3, 1), (-0.3, 0.0, 1), Z], r_fore=[(0.0, 0.4, 1), Z, Z])
    presets = {"walking": walking, "discussion": discussion, "eating": eating, "greeting": greeting}
    partitions = {"lower": list(range(0, 6)), "upper": list(range(6, 16)), "full": list(range(16))}
    return SkeletonModel(names, parents, lengths, dirs, {k: v[0] for k, v in presets.items()},
                         limb_names, partitions, intensity, {k: v[1] for k, v in presets.items()})


def forward_kinematics(model: SkeletonModel, angles: np.ndarray) -> np.ndarray:
    """Joint positions (J, 3) for per-joint Euler angles (J, 3); root at origin."""
    J = model.n_joints
    pos = np.zeros((J, 3))
    frames = [rotation(angles[0])]
    for j in range(1, J):
        frame = frames[model.parents[j]] @ rotation(angles[j])
        frames.append(frame)
        pos[j] = pos[model.parents[j]] + frame @ (np.asarray(model.rest_dirs[j]) * model.lengths[j])
    return pos


def sample_angles(model: SkeletonModel, rng: RngStream, action: str | None = None) -> np.ndarray:
    """Uniform angles within the action's ranges, shared through its controls."""
    action = action or model.actions[0]
    ranges = np.asarray(model.angle_ranges[action], float)
    coupling = model.coupling(action)
    free = coupling >= 0
    anti = (coupling < 0) & (coupling != FIXED)
    ids = np.concatenate([coupling[free], ~coupling[anti]])
    controls = rng.random(int(ids.max()) + 1 if ids.size else 0)
    u = np.zeros(coupling.shape)
    u[free] = controls[coupling[free]]
    u[anti] = 1.0 - controls[~coupling[anti]]
    return ranges[..., 0] + u * (ranges[..., 1] - ranges[..., 0])


def sample_pose(model: SkeletonModel, rng: RngStream, action: str | None = None) -> np.ndarray:
    """Draw uniform joint angles within the action's ranges and run FK."""
    return forward_kinematics(model, sample_angles(model, rng, action)).reshape(-1)


# -------------------------------------------------------------------- rendering


@dataclass
class CameraConfig:
    axes: tuple[int, int] = (0, 2)  # world axis shown horizontally, vertically (up)
    image_size: int = 32
    mm_per_pixel: float = 75.0
    thickness: float = 1.0

    def __post_init__(self):
        self.axes = tuple(int(a) for a in self.axes)
        if self.image_size < 16:
            raise ParameterError(f"image size must be >= 16, got {self.image_size}")
        if self.mm_per_pixel <= 0 or self.thickness <= 0:
            raise ParameterError("mm_per_pixel and thickness must be positive")
        if len(self.axes) != 2 or self.axes[0] == self.axes[1] or not set(self.axes) <= {0, 1, 2}:
            raise ParameterError(f"axes must be two distinct indices in 0..2, got {self.axes}")


def project(pose: np.ndarray, camera: CameraConfig) -> np.ndarray:
    """Orthographic projection to pixel coordinates (J, 2) as (column, row).

    The root lands at the image centre; pixel centres sit at integer
    coordinates.
    """
    jt = np.asarray(pose, float).reshape(-1, 3)
    c = (camera.image_size - 1) / 2.0
    u = c + jt[:, camera.axes[0]] / camera.mm_per_pixel
    v = c - jt[:, camera.axes[1]] / camera.mm_per_pixel
    return np.stack([u, v], axis=1)


def _segment_distance(px: np.ndarray, py: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = b - a
    denom = float(d @ d)
    if denom == 0.0:
        t = np.zeros_like(px)
    else:
        t = np.clip(((px - a[0]) * d[0] + (py - a[1]) * d[1]) / denom, 0.0, 1.0)
    return np.hypot(px - (a[0] + t * d[0]), py - (a[1] + t * d[1]))


def render(pose: np.ndarray, camera: CameraConfig, model: SkeletonModel | None = None) -> np.ndarray:
    """Anti-aliased stick figure, a (H, W) float image in [0, 1].

    Pixel coverage is ``clip(thickness/2 + 0.5 - distance, 0, 1)`` times the
    limb's intensity; overlapping limbs take the maximum.
    """
    pts = project(pose, camera)
    n = camera.image_size
    J = len(pts)
    names = model.joint_names if model else [f"joint {j}" for j in range(J)]
    for j, (u, v) in enumerate(pts):
        if not (0.0 <= u <= n - 1 and 0.0 <= v <= n - 1):
            raise RangeError(f"{names[j]} projects outside the image at ({u:.1f}, {v:.1f})")
    if model is not None:
        limbs, gains = model.limbs, model.limb_intensity
    else:
        limbs, gains = [(j - 1, j) for j in range(1, J)], [1.0] * (J - 1)
    py, px = np.mgrid[0:n, 0:n].astype(float)
    img = np.zeros((n, n))
    half = camera.thickness / 2.0 + 0.5
    for (p, c), gain in zip(limbs, gains):
        cover = np.clip(half - _segment_distance(px, py, pts[p], pts[c]), 0.0, 1.0)
        np.maximum(img, gain * cover, out=img)
    return img


# ----------------------------------------------------------------- dataset I/O


@dataclass
class DatasetRecord:
    sample_id: int
    pose: np.ndarray
    image: np.ndarray
    subject: int
    action: str


@dataclass
class PoseImageSet:
    poses: np.ndarray  # (n, 3J)
    images: np.ndarray  # (n, 1, H, W)
    subjects: np.ndarray  # (n,) int
    actions: list[str]
    sample_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.poses)

    def records(self) -> Iterator[DatasetRecord]:
        for i in range(len(self)):
            yield DatasetRecord(int(self.sample_ids[i]), self.poses[i], self.images[i, 0],
                                int(self.subjects[i]), self.actions[i])

    def subset(self, idx) -> "PoseImageSet":
        idx = np.asarray(idx)
        return PoseImageSet(self.poses[idx], self.images[idx], self.subjects[idx],
                            [self.actions[i] for i in idx], self.sample_ids[idx])


@dataclass
class SyntheticDataset:
    train: PoseImageSet
    test: PoseImageSet
    model: SkeletonModel
    camera: CameraConfig
    manifest: dict[str, str]


@dataclass
class SubjectSpec:
    train: dict[int, float] = field(default_factory=lambda: {1: 0.92, 5: 0.96, 6: 1.0, 7: 1.04, 8: 1.08})
    test: dict[int, float] = field(default_factory=lambda: {9: 0.94, 11: 1.06})

    def __post_init__(self):
        overlap = set(self.train) & set(self.test)
        if overlap:
            raise ParameterError(f"subjects {sorted(overlap)} appear in both train and test splits")
        if not self.train or not self.test:
            raise ParameterError("both splits need at least one subject")
        if any(s <= 0 for s in [*self.train.values(), *self.test.values()]):
            raise ParameterError("subject scale factors must be positive")


def _make_split(model, camera, subjects: dict[int, float], actions, n, rng: RngStream) -> PoseImageSet:
    ids = sorted(subjects)
    scaled = {s: model.scaled(subjects[s]) for s in ids}
    poses, images, subj, acts = [], [], [], []
    for i in range(n):
        s = ids[i % len(ids)]
        a = actions[(i // len(ids)) % len(actions)]
        pose = sample_pose(scaled[s], rng.substream(i), a)
        poses.append(pose)
        images.append(render(pose, camera, model)[None])
        subj.append(s)
        acts.append(a)
    return PoseImageSet(np.array(poses), np.array(images), np.array(subj, dtype=np.int64), acts,
                        np.arange(n, dtype=np.int64))


def generate_dataset(
    model: SkeletonModel,
    camera: CameraConfig,
    n_train: int = 200,
    n_test: int = 50,
    subjects: SubjectSpec | None = None,
    seed: int = 0,
    actions: Sequence[str] | None = None,
) -> SyntheticDataset:
    """Train/test splits from disjoint subject scale variants."""
    if n_train <= 0 or n_test <= 0:
        raise ParameterError("n_train and n_test must be positive")
    subjects = subjects or SubjectSpec()
    actions = list(actions or model.actions)
    unknown = set(actions) - set(model.actions)
    if unknown:
        raise ParameterError(f"unknown actions {sorted(unknown)}")
    root = RngStream(seed)
    train = _make_split(model, camera, subjects.train, actions, n_train, root.substream(0))
    test = _make_split(model, camera, subjects.test, actions, n_test, root.substream(1))
    manifest = {
        "format_version": str(FORMAT_VERSION),
        "seed": str(seed),
        "n_train": str(n_train),
        "n_test": str(n_test),
        "joints": str(model.n_joints),
        "actions": ",".join(actions),
        "train_subjects": ",".join(f"{k}:{v!r}" for k, v in sorted(subjects.train.items())),
        "test_subjects": ",".join(f"{k}:{v!r}" for k, v in sorted(subjects.test.items())),
        "camera_axes": f"{camera.axes[0]},{camera.axes[1]}",
        "camera_image_size": str(camera.image_size),
        "camera_mm_per_pixel": repr(camera.mm_per_pixel),
        "camera_thickness": repr(camera.thickness),
        "skeleton_sha256": hashlib.sha256(model.to_json().encode()).hexdigest(),
    }
    return SyntheticDataset(train, test, model, camera, manifest)


def _parse_subjects(text: str) -> dict[int, float]:
    out = {}
    for item in text.split(","):
        k, v = item.split(":")
        out[int(k)] = float(v)
    return out


def regenerate(manifest: dict[str, str], model: SkeletonModel) -> SyntheticDataset:
    """Rebuild a dataset from its manifest entries."""
    ax = tuple(int(a) for a in manifest["camera_axes"].split(","))
    camera = CameraConfig(ax, int(manifest["camera_image_size"]), float(manifest["camera_mm_per_pixel"]),
                          float(manifest["camera_thickness"]))
    subjects = SubjectSpec(_parse_subjects(manifest["train_subjects"]), _parse_subjects(manifest["test_subjects"]))
    return generate_dataset(model, camera, int(manifest["n_train"]), int(manifest["n_test"]), subjects,
                            int(manifest["seed"]), manifest["actions"].split(","))


def encode_array(arr: np.ndarray, dtype: str = "d") -> bytes:
    if dtype == "d":
        data = np.ascontiguousarray(arr, dtype="<f8")
    elif dtype == "B":
        data = np.ascontiguousarray(np.round(np.clip(arr, 0.0, 1.0) * 255), dtype=np.uint8)
    else:
        raise ParameterError(f"unknown array dtype code {dtype!r}")
    head = ARRAY_MAGIC + struct.pack("<IcBxx", FORMAT_VERSION, dtype.encode(), data.ndim)
    return head + struct.pack(f"<{data.ndim}I", *data.shape) + data.tobytes()


def decode_array(blob: bytes, what: str = "array") -> np.ndarray:
    if len(blob) < 16 or blob[:8] != ARRAY_MAGIC:
        raise FormatError(f"{what}: not a dataset array file (bad magic)")
    version, code, ndim = struct.unpack("<IcBxx", blob[8:16])
    if version != FORMAT_VERSION:
        raise FormatError(f"{what}: unsupported version {version} (expected {FORMAT_VERSION})")
    if len(blob) < 16 + 4 * ndim:
        raise FormatError(f"{what}: truncated header")
    shape = struct.unpack(f"<{ndim}I", blob[16 : 16 + 4 * ndim])
    count = int(np.prod(shape, dtype=np.int64))
    dt = {b"d": np.dtype("<f8"), b"B": np.dtype(np.uint8)}.get(code)
    if dt is None:
        raise FormatError(f"{what}: unknown dtype code {code!r}")
    body = blob[16 + 4 * ndim :]
    if len(body) != count * dt.itemsize:
        raise FormatError(f"{what}: expected {count * dt.itemsize} data bytes, found {len(body)}")
    arr = np.frombuffer(body, dtype=dt).reshape(shape)
    return arr.astype(np.float64) if code == b"d" else arr.astype(np.float64) / 255.0


def _labels_csv(split: PoseImageSet) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "subject", "action"])
    for i in range(len(split)):
        w.writerow([int(split.sample_ids[i]), int(split.subjects[i]), split.actions[i]])
    return buf.getvalue()


def save_dataset(dataset: SyntheticDataset, path, image_dtype: str = "d") -> dict[str, str]:
    """Write the dataset directory; returns the manifest as written."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    files = {"skeleton.json": dataset.model.to_json().encode()}
    for name, split in (("train", dataset.train), ("test", dataset.test)):
        files[f"{name}_poses.bin"] = encode_array(split.poses, "d")
        files[f"{name}_images.bin"] = encode_array(split.images, image_dtype)
        files[f"{name}_labels.csv"] = _labels_csv(split).encode()
    manifest = dict(dataset.manifest)
    manifest["image_dtype"] = image_dtype
    for fname, blob in sorted(files.items()):
        (path / fname).write_bytes(blob)
        manifest[f"sha256.{fname}"] = hashlib.sha256(blob).hexdigest()
    manifest["manifest_hash"] = manifest_hash(manifest)
    (path / "manifest.txt").write_text("".join(f"{k}={v}\n" for k, v in manifest.items()))
    dataset.manifest = manifest
    return manifest


def manifest_hash(manifest: dict[str, str]) -> str:
    body = "".join(f"{k}={v}\n" for k, v in sorted(manifest.items()) if k != "manifest_hash")
    return hashlib.sha256(body.encode()).hexdigest()


def read_manifest(path) -> dict[str, str]:
    path = Path(path)
    mf = path / "manifest.txt" if path.is_dir() else path
    if not mf.exists():
        raise FormatError(f"no manifest at {mf}")
    out = {}
    for line in mf.read_text().splitlines():
        if not line.strip():
            continue
        k, sep, v = line.partition("=")
        if not sep:
            raise FormatError(f"malformed manifest line {line!r}")
        out[k] = v
    if out.get("format_version") != str(FORMAT_VERSION):
        raise FormatError(f"unsupported dataset format version {out.get('format_version')!r}")
    return out


def _read_labels(text: str) -> tuple[np.ndarray, np.ndarray, list[str]]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["sample_id", "subject", "action"]:
        raise FormatError("labels file has an unexpected header")
    body = rows[1:]
    return (np.array([int(r[0]) for r in body], dtype=np.int64),
            np.array([int(r[1]) for r in body], dtype=np.int64), [r[2] for r in body])


def load_dataset(path, verify: bool = True) -> SyntheticDataset:
    path = Path(path)
    manifest = read_manifest(path)
    if verify and manifest.get("manifest_hash") != manifest_hash(manifest):
        raise FormatError("manifest hash does not match its contents")
    blobs = {}
    for key, digest in manifest.items():
        if not key.startswith("sha256."):
            continue
        fname = key[7:]
        fpath = path / fname
        if not fpath.exists():
            raise FormatError(f"dataset file {fname} is missing")
        blobs[fname] = fpath.read_bytes()
        if verify and hashlib.sha256(blobs[fname]).hexdigest() != digest:
            raise FormatError(f"dataset file {fname} does not match its manifest hash")
    model = SkeletonModel.from_json(blobs["skeleton.json"].decode())
    ax = tuple(int(a) for a in manifest["camera_axes"].split(","))
    camera = CameraConfig(ax, int(manifest["camera_image_size"]), float(manifest["camera_mm_per_pixel"]),
                          float(manifest["camera_thickness"]))
    splits = {}
    for name in ("train", "test"):
        poses = decode_array(blobs[f"{name}_poses.bin"], f"{name}_poses.bin")
        images = decode_array(blobs[f"{name}_images.bin"], f"{name}_images.bin")
        ids, subj, acts = _read_labels(blobs[f"{name}_labels.csv"].decode())
        if not (len(poses) == len(images) == len(ids)):
            raise FormatError(f"{name} split files disagree on sample count")
        if poses.shape[1] != model.pose_dim or images.shape[-1] != camera.image_size:
            raise DimensionError(f"{name} split does not match skeleton/camera dimensions")
        splits[name] = PoseImageSet(poses, images, subj, acts, ids)
    return SyntheticDataset(splits["train"], splits["test"], model, camera, manifest)


def export_pgm(images: np.ndarray, out_dir, prefix: str = "sample") -> list[Path]:
    from .eval import write_pgm

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(images):
        p = out_dir / f"{prefix}_{i:05d}.pgm"
        write_pgm(p, np.asarray(img).reshape(img.shape[-2:]))
        paths.append(p)
    return paths


def skeleton_scale(model: SkeletonModel) -> float:
    """Mean limb length of the model, in mm."""
    return float(np.mean(model.lengths[1:]))
