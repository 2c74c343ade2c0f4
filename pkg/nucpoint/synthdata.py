'''
File: synthdata.py
Project: nucpoint
File Created: Tuesday, 3rd March 2026 4:02:19 pm
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Sunday, 15th March 2026 12:30:51 pm
Modified By: koko (koko231125@gmail.com>)
'''


import json
import logging
import math
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

import nucpoint.utils as utils
from nucpoint.errors import DataFormatError, MissingInputError, UnsatisfiableDensityError


logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'
ANNOTATION_HEADER = 'x,y,class'

# (background rgb, nucleus rgb) per dataset identity
STYLE_PALETTE: tuple[tuple[tuple[float, float, float], tuple[float, float, float]], ...] = (
    ((0.93, 0.80, 0.87), (0.36, 0.22, 0.50)),
    ((0.88, 0.84, 0.92), (0.28, 0.24, 0.46)),
    ((0.95, 0.86, 0.80), (0.42, 0.26, 0.40)),
)


"""Scene Description
"""


@dataclass(frozen=True)
class SceneSpec:
    r"""Everything that defines one synthetic "dataset identity".

    Attributes:
        height (int):
            Image height in pixels.
        width (int):
            Image width in pixels.
        mean_count (float):
            Poisson mean of the number of nuclei per image.
        min_separation (float):
            Minimum distance between two nucleus centers.
        r_min (float):
            Smallest nucleus radius.
        r_max (float):
            Largest nucleus radius.
        class_prior (tuple[float, ...]):
            Probability of each class, the length is the class count C.
        style (int):
            Index into the background/stain palette.
        noise (float):
            Standard deviation of the per-pixel Gaussian noise.
        contrast_margin (float):
            Required luminance gap between background and nuclei.
        cue_amplitude (float):
            Amplitude of the luminance-neutral class hue cue.
        texture_amplitude (float):
            Amplitude of the class dependent texture stripes.
        stain_jitter (float):
            Class independent per-instance color jitter.
        max_retries (int):
            Placement attempts per nucleus before giving up.
    """
    height: int = 64
    width: int = 64
    mean_count: float = 8.0
    min_separation: float = 8.0
    r_min: float = 3.0
    r_max: float = 5.0
    class_prior: tuple[float, ...] = (1 / 3, 1 / 3, 1 / 3)
    style: int = 0
    noise: float = 0.03
    contrast_margin: float = 0.3
    cue_amplitude: float = 0.06
    texture_amplitude: float = 0.02
    stain_jitter: float = 0.02
    max_retries: int = 200

    @property
    def num_classes(self) -> int:
        return len(self.class_prior)

    @property
    def background(self) -> np.ndarray:
        return np.array(STYLE_PALETTE[self.style % len(STYLE_PALETTE)][0])

    @property
    def nucleus_color(self) -> np.ndarray:
        return np.array(STYLE_PALETTE[self.style % len(STYLE_PALETTE)][1])

    def validate(self) -> 'SceneSpec':
        """Check the generator parameters.

        Returns:
            SceneSpec:
                self, for chaining.

        Raises:
            ValueError:
                If any invariant is broken.
        """
        if self.height <= 0 or self.width <= 0:
            raise ValueError(f"image size must be positive, got {self.height}x{self.width}")
        if not 0 < self.r_min <= self.r_max:
            raise ValueError(f"radii must satisfy 0 < r_min <= r_max, got {self.r_min}, {self.r_max}")
        if 2 * self.r_max >= min(self.height, self.width):
            raise ValueError("nuclei do not fit inside the image")
        if self.min_separation < 2 * self.r_min:
            raise ValueError(f"min_separation {self.min_separation} must be at least 2 * r_min")
        if self.mean_count < 0:
            raise ValueError(f"mean_count must be non-negative, got {self.mean_count}")
        prior = np.asarray(self.class_prior, dtype=np.float64)
        if prior.size == 0 or np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-9:
            raise ValueError(f"class_prior must be a probability vector, got {self.class_prior}")
        lum_gap = abs(self.background.mean() - self.nucleus_color.mean())
        if lum_gap < self.contrast_margin:
            raise ValueError(f"palette contrast {lum_gap:.3f} is below the margin {self.contrast_margin}")
        return self

    def to_dict(self) -> dict[str, object]:
        out = asdict(self)
        out['class_prior'] = list(self.class_prior)
        return out

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> 'SceneSpec':
        data = dict(data)
        data['class_prior'] = tuple(float(p) for p in data.get('class_prior', cls.class_prior))
        return cls(**data)


@dataclass(frozen=True)
class Appearance:
    r"""Per-instance look: ellipse shape and class independent stain variation."""
    elongation: float = 1.0
    angle: float = 0.0
    jitter: tuple[float, float, float] = (0.0, 0.0, 0.0)
    texture_phase: float = 0.0


@dataclass(frozen=True)
class NucleusInstance:
    r"""One nucleus of a scene.

    Attributes:
        center (tuple[float, float]):
            (x, y) in pixels, origin at the top-left pixel corner.
        radius (float):
            Mean radius in pixels.
        class_id (int):
            1-based class.
        appearance (Appearance):
            Shape and stain parameters.
    """
    center: tuple[float, float]
    radius: float
    class_id: int
    appearance: Appearance = field(default_factory=Appearance)


@dataclass
class Sample:
    r"""An image with its point annotations, the unit every trainer consumes.

    Attributes:
        image (np.ndarray):
            [3, H, W] values in [0, 1].
        points (np.ndarray):
            [K, 2] (x, y) nucleus centers.
        labels (np.ndarray):
            [K] 1-based classes.
        name (str):
            An identifier, the file stem for samples read from disk.
    """
    image: np.ndarray
    points: np.ndarray
    labels: np.ndarray
    name: str = ''

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        assert len(self.points) == len(self.labels), ValueError("points and labels differ in length")


"""Generation
"""


def sample_scene(spec: SceneSpec, seed: int) -> list[NucleusInstance]:
    r"""Draw the nuclei of one image by rejection sampling.

    Args:
        spec (SceneSpec):
            A valid scene spec.
        seed (int):
            The scene seed.

    Returns:
        list[NucleusInstance]:
            Nuclei whose pairwise center distance is at least `spec.min_separation`.

    Raises:
        UnsatisfiableDensityError:
            If a nucleus cannot be placed within `spec.max_retries` attempts.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    count = int(rng.poisson(spec.mean_count)) if spec.mean_count > 0 else 0
    margin = spec.r_max
    prior = np.asarray(spec.class_prior, dtype=np.float64)

    centers: list[tuple[float, float]] = []
    for index in range(count):
        for _ in range(spec.max_retries):
            x = float(rng.uniform(margin, spec.width - margin))
            y = float(rng.uniform(margin, spec.height - margin))
            if all(math.hypot(x - cx, y - cy) >= spec.min_separation for cx, cy in centers):
                centers.append((x, y))
                break
        else:
            raise UnsatisfiableDensityError(
                f"could not place nucleus {index + 1} of {count} with separation {spec.min_separation} "
                f"after {spec.max_retries} attempts"
            )

    nuclei = []
    for center in centers:
        nuclei.append(NucleusInstance(
            center=center,
            radius=float(rng.uniform(spec.r_min, spec.r_max)),
            class_id=int(rng.choice(len(prior), p=prior)) + 1,
            appearance=Appearance(
                elongation=float(rng.uniform(1.0, 1.3)),
                angle=float(rng.uniform(0.0, math.pi)),
                jitter=tuple(float(v) for v in rng.normal(0.0, spec.stain_jitter, size=3)),
                texture_phase=float(rng.uniform(0.0, 2 * math.pi)),
            ),
        ))
    return nuclei


def class_cue(class_id: int, spec: SceneSpec) -> np.ndarray:
    """The RGB hue offset of a class. Its channels sum to zero, so luminance is untouched."""
    theta = 2 * math.pi * (class_id - 1) / spec.num_classes
    return spec.cue_amplitude * np.array([
        math.cos(theta), math.cos(theta - 2 * math.pi / 3), math.cos(theta + 2 * math.pi / 3),
    ])


def coverage(nucleus: NucleusInstance, height: int, width: int) -> np.ndarray:
    """Anti-aliased [H, W] ellipse coverage in [0, 1] sampled at pixel centers."""
    app = nucleus.appearance
    ys, xs = np.mgrid[0:height, 0:width]
    dx = xs + 0.5 - nucleus.center[0]
    dy = ys + 0.5 - nucleus.center[1]
    cos_a, sin_a = math.cos(app.angle), math.sin(app.angle)
    xr = dx * cos_a + dy * sin_a
    yr = -dx * sin_a + dy * cos_a
    a = nucleus.radius * math.sqrt(app.elongation)
    b = nucleus.radius / math.sqrt(app.elongation)
    rho = np.sqrt((xr / a) ** 2 + (yr / b) ** 2)
    return np.clip(0.5 - (rho - 1.0) * nucleus.radius, 0.0, 1.0)


def render(scene: list[NucleusInstance], spec: SceneSpec, seed: int = 0) -> np.ndarray:
    r"""Paint a scene. Nuclei differ from the background by a strong luminance drop while their
    class is visible only through the low amplitude hue cue and texture stripes.

    Args:
        scene (list[NucleusInstance]):
            The nuclei to draw.
        spec (SceneSpec):
            The spec the scene was sampled from.
        seed (int, optional):
            Seed of the pixel noise. Defaults to 0.

    Returns:
        np.ndarray:
            The [3, H, W] image, values in [0, 1].
    """
    rng = np.random.default_rng(seed)
    h, w = spec.height, spec.width
    image = np.broadcast_to(spec.background[:, None, None], (3, h, w)).copy()
    if spec.noise > 0:
        image += rng.normal(0.0, spec.noise, size=(3, h, w))

    ys, xs = np.mgrid[0:h, 0:w]
    for nucleus in scene:
        alpha = coverage(nucleus, h, w)
        if not alpha.any():
            continue
        color = spec.nucleus_color + np.asarray(nucleus.appearance.jitter) + class_cue(nucleus.class_id, spec)
        paint = np.broadcast_to(color[:, None, None], (3, h, w))
        if spec.texture_amplitude > 0:
            frequency = 0.6 + 0.5 * nucleus.class_id
            stripes = np.sin(frequency * (xs + 0.5 - nucleus.center[0]) + nucleus.appearance.texture_phase)
            paint = paint + spec.texture_amplitude * stripes[None]
        image = (1.0 - alpha[None]) * image + alpha[None] * paint
    return np.clip(image, 0.0, 1.0)


def quantize(image: np.ndarray) -> np.ndarray:
    """Round to the 8-bit grid so in-memory samples equal samples read back from PNG."""
    return np.round(np.clip(image, 0.0, 1.0) * 255.0) / 255.0


def generate_sample(spec: SceneSpec, seed: int, index: int) -> Sample:
    """Generate image `index` of the dataset with run seed `seed`."""
    image_seed = utils.derive_seed(seed, index)
    scene = sample_scene(spec, image_seed)
    image = quantize(render(scene, spec, utils.derive_seed(image_seed, 1)))
    points = np.array([n.center for n in scene], dtype=np.float64).reshape(-1, 2)
    labels = np.array([n.class_id for n in scene], dtype=np.int64)
    return Sample(image, points, labels, name=f'img_{index:04d}')


def generate_samples(spec: SceneSpec, seed: int, count: int, start: int = 0) -> list[Sample]:
    """Generate `count` samples with indices start, ..., start + count - 1."""
    spec.validate()
    return [generate_sample(spec, seed, index) for index in range(start, start + count)]


"""Dataset I/O
"""


@dataclass
class ManifestEntry:
    image: str
    annotation: str
    split: str = 'train'


@dataclass
class DatasetManifest:
    r"""A dataset directory: images/, annotations/ and `manifest.json`.

    Attributes:
        root (Path):
            The dataset directory.
        entries (list[ManifestEntry]):
            Relative image and annotation paths with their split.
        seed (int):
            The generation seed, -1 for ingested external data.
        spec (SceneSpec):
            The spec the images were drawn from.
        num_classes (int):
            The class count C.
        n_nuclei (int):
            Total annotation count N_nu.
    """
    root: Path
    entries: list[ManifestEntry]
    seed: int
    spec: SceneSpec
    num_classes: int
    n_nuclei: int

    def samples(self, split: str | None = None) -> list[Sample]:
        """Read the samples of one split, or all of them when `split` is None."""
        out = []
        for entry in self.entries:
            if split is not None and entry.split != split:
                continue
            image = read_image(self.root / entry.image)
            points, labels = read_annotations(self.root / entry.annotation, self.num_classes, image.shape[1:])
            out.append(Sample(image, points, labels, name=Path(entry.image).stem))
        return out

    def to_dict(self) -> dict[str, object]:
        return {
            'version': 1,
            'seed': self.seed,
            'num_classes': self.num_classes,
            'n_nuclei': self.n_nuclei,
            'spec': self.spec.to_dict(),
            'entries': [asdict(entry) for entry in self.entries],
        }


def write_annotations(path: Path, points: np.ndarray, labels: np.ndarray) -> None:
    lines = [ANNOTATION_HEADER]
    for (x, y), c in zip(points, labels):
        lines.append(f'{float(x)!r},{float(y)!r},{int(c)}')
    path.write_text('\n'.join(lines) + '\n')


def read_annotations(
    path: Path,
    num_classes: int,
    image_shape: tuple[int, int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Parse an `x,y,class` annotation file.

    Args:
        path (Path):
            The annotation file.
        num_classes (int):
            The class count C; classes must lie in [1, C].
        image_shape (tuple[int, int] | None, optional):
            (H, W) of the image; points must lie inside it. Defaults to None (unchecked).

    Returns:
        tuple[np.ndarray, np.ndarray]:
            Points [K, 2] and labels [K].

    Raises:
        DataFormatError:
            Naming the file and line of the first malformed row.
    """
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise DataFormatError(path, f"cannot read annotations ({exc.strerror})") from exc
    if not lines or lines[0].strip() != ANNOTATION_HEADER:
        raise DataFormatError(path, f"expected header '{ANNOTATION_HEADER}'", 1)

    points, labels = [], []
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(',')
        if len(fields) != 3:
            raise DataFormatError(path, f"expected 3 fields, got {len(fields)}", number)
        try:
            x, y, c = float(fields[0]), float(fields[1]), int(fields[2])
        except ValueError:
            raise DataFormatError(path, f"cannot parse row '{line}'", number) from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise DataFormatError(path, "coordinates must be finite", number)
        if not 1 <= c <= num_classes:
            raise DataFormatError(path, f"class {c} is outside [1, {num_classes}]", number)
        if image_shape is not None and not (0.0 <= x <= image_shape[1] and 0.0 <= y <= image_shape[0]):
            raise DataFormatError(path, f"point ({x}, {y}) lies outside the image", number)
        points.append((x, y))
        labels.append(c)
    return np.array(points, dtype=np.float64).reshape(-1, 2), np.array(labels, dtype=np.int64)


def write_image(path: Path, image: np.ndarray) -> None:
    data = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(data, mode='RGB').save(path, format='PNG')


def read_image(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            data = np.asarray(img.convert('RGB'), dtype=np.uint8)
    except (OSError, UnidentifiedImageError) as exc:
        raise DataFormatError(path, f"unreadable image ({exc})") from exc
    return data.transpose(2, 0, 1).astype(np.float64) / 255.0


def write_dataset(
    directory: str | Path,
    splits: dict[str, list[Sample]],
    spec: SceneSpec,
    seed: int,
) -> DatasetManifest:
    """Write samples as a dataset directory.

    Args:
        directory (str | Path):
            The target directory, created if needed.
        splits (dict[str, list[Sample]]):
            Samples per split name, e.g. {'train': [...], 'test': [...]}.
        spec (SceneSpec):
            The spec recorded in the manifest.
        seed (int):
            The seed recorded in the manifest.

    Returns:
        DatasetManifest:
            The manifest that was written.
    """
    root = Path(directory)
    (root / 'images').mkdir(parents=True, exist_ok=True)
    (root / 'annotations').mkdir(parents=True, exist_ok=True)

    entries, total = [], 0
    for split, samples in splits.items():
        for sample in samples:
            image_rel = f'images/{sample.name}.png'
            ann_rel = f'annotations/{sample.name}.csv'
            write_image(root / image_rel, sample.image)
            write_annotations(root / ann_rel, sample.points, sample.labels)
            entries.append(ManifestEntry(image_rel, ann_rel, split))
            total += len(sample.points)

    manifest = DatasetManifest(root, entries, seed, spec, spec.num_classes, total)
    (root / MANIFEST_NAME).write_text(json.dumps(manifest.to_dict(), indent=2) + '\n')
    logger.info("wrote %d images with %d nuclei to %s", len(entries), total, root)
    return manifest


def generate_dataset(
    directory: str | Path,
    spec: SceneSpec,
    seed: int,
    n_train: int = 200,
    n_test: int = 50,
) -> DatasetManifest:
    """Generate and write a dataset with `n_train` training and `n_test` test images."""
    train = generate_samples(spec, seed, n_train)
    test = generate_samples(spec, seed, n_test, start=n_train)
    return write_dataset(directory, {'train': train, 'test': test}, spec, seed)


def load_dataset(directory: str | Path) -> DatasetManifest:
    r"""Read and verify a dataset directory.

    Every listed file must exist and parse, and the annotation total must equal the recorded
    nucleus count.

    Args:
        directory (str | Path):
            The dataset directory.

    Returns:
        DatasetManifest:
            The verified manifest.

    Raises:
        MissingInputError:
            If the directory or its manifest does not exist.
        DataFormatError:
            If the manifest, an image or an annotation file is malformed.
    """
    root = Path(directory)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise MissingInputError(f"no dataset manifest at {manifest_path}")
    try:
        data = json.loads(manifest_path.read_text())
        spec = SceneSpec.from_dict(data['spec'])
        entries = [ManifestEntry(**entry) for entry in data['entries']]
        manifest = DatasetManifest(
            root, entries, int(data['seed']), spec, int(data['num_classes']), int(data['n_nuclei']),
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise DataFormatError(manifest_path, f"malformed manifest ({exc})") from exc

    total = 0
    for entry in manifest.entries:
        for rel in (entry.image, entry.annotation):
            if not (root / rel).is_file():
                raise DataFormatError(manifest_path, f"listed file {rel} does not exist")
        image = read_image(root / entry.image)
        points, _ = read_annotations(root / entry.annotation, manifest.num_classes, image.shape[1:])
        total += len(points)
    if total != manifest.n_nuclei:
        raise DataFormatError(manifest_path, f"manifest records {manifest.n_nuclei} nuclei, files hold {total}")
    return manifest


def styled(spec: SceneSpec, style: int) -> SceneSpec:
    """A copy of `spec` with another dataset identity."""
    return replace(spec, style=style)


@dataclass
class DataSplit:
    r"""Training and held-out samples of one dataset, what every trainer consumes.

    Attributes:
        train (list[Sample]):
            Training samples.
        test (list[Sample]):
            Held-out samples used for validation curves.
        num_classes (int):
            The class count C.
        name (str):
            A label for logs and errors.
    """
    train: list[Sample]
    test: list[Sample]
    num_classes: int
    name: str = 'dataset'

    @classmethod
    def from_manifest(cls, manifest: DatasetManifest) -> 'DataSplit':
        return cls(manifest.samples('train'), manifest.samples('test'), manifest.num_classes, str(manifest.root))

    @classmethod
    def generate(cls, spec: SceneSpec, seed: int, n_train: int, n_test: int, name: str = 'synthetic') -> 'DataSplit':
        """Generate the same samples `generate_dataset` would write, without touching the disk."""
        train = generate_samples(spec, seed, n_train)
        test = generate_samples(spec, seed, n_test, start=n_train)
        return cls(train, test, spec.num_classes, name)

    @property
    def validation(self) -> list[Sample]:
        """The held-out samples, or the training samples when nothing is held out."""
        return self.test if self.test else self.train
