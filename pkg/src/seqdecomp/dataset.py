"""On-disk layout for samples, pseudo-labels, solve results, and reports.

Layout per sample directory:

    <root>/<sample_id>/origin.png
    <root>/<sample_id>/view_01.png ... view_NN.png
    <root>/<sample_id>/gt/{shadow,light,occmask,occ}_XX.png
    <root>/<sample_id>/manifest.json
    <root>/<sample_id>/pseudo/{shadow,light,occmask,sl}_XX.png

Solve results mirror the numbering under a separate output root:

    <out>/<sample_id>/oi.png, {sl,shadow,light,occmask,recon}_XX.png, trace.json

All JSON is written with sorted keys and full-precision floats so reruns with
the same seed and config are byte-identical (wall time lives only in
trace.json, which is excluded from that guarantee).
"""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path

from . import decomp, evalkit, pseudolabel
from .imgcore import BinaryMask, Image, read_binary_png, read_mask_png, read_png, write_png
from .synthgen import AugmentationParams, HardShadow, Occluder, SceneSample, Spotlight

MANIFEST_SCHEMA_VERSION = 1


def view_name(i: int) -> str:
    return f"view_{i + 1:02d}.png"


def _idx(i: int) -> str:
    return f"{i + 1:02d}"


def params_to_dict(p: AugmentationParams) -> dict:
    return dataclasses.asdict(p)


def params_from_dict(d: dict) -> AugmentationParams:
    def _pairs(seq):
        return tuple(tuple(v) for v in seq)

    return AugmentationParams(
        ambient_factor=d["ambient_factor"],
        hard_shadows=tuple(
            HardShadow(polygon=_pairs(s["polygon"]), intensity=s["intensity"], feather_sigma=s["feather_sigma"])
            for s in d["hard_shadows"]
        ),
        spotlights=tuple(
            Spotlight(center=tuple(s["center"]), radius_sigma=s["radius_sigma"], intensity=s["intensity"])
            for s in d["spotlights"]
        ),
        occluders=tuple(
            Occluder(
                shape=o["shape"],
                region=_pairs(o["region"]) if o["shape"] == "polygon" else tuple(o["region"]),
                color=tuple(o["color"]),
                alpha=o["alpha"],
                texture_seed=o["texture_seed"],
            )
            for o in d["occluders"]
        ),
        max_occlusion_coverage=d["max_occlusion_coverage"],
    )


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def save_sample(root: Path, sample_id: str, sample: SceneSample, config_hash: str, tool_version: str) -> Path:
    sdir = Path(root) / sample_id
    gt = sdir / "gt"
    gt.mkdir(parents=True, exist_ok=True)
    write_png(sdir / "origin.png", sample.origin)
    for i in range(sample.n_views):
        write_png(sdir / view_name(i), sample.views[i])
        write_png(gt / f"shadow_{_idx(i)}.png", sample.gt_shadow[i])
        write_png(gt / f"light_{_idx(i)}.png", sample.gt_light[i])
        write_png(gt / f"occmask_{_idx(i)}.png", sample.gt_occ_mask[i])
        write_png(gt / f"occ_{_idx(i)}.png", sample.gt_occ_content[i])
    write_json(
        sdir / "manifest.json",
        {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "sample_id": sample_id,
            "seed": sample.seed,
            "n_views": sample.n_views,
            "height": sample.origin.height,
            "width": sample.origin.width,
            "config_hash": config_hash,
            "tool_version": tool_version,
            "views": [params_to_dict(p) for p in sample.params],
        },
    )
    return sdir


def load_sample(root: Path, sample_id: str) -> SceneSample:
    """Rebuild a sample from disk; rasters carry 1/255 quantization."""
    sdir = Path(root) / sample_id
    manifest = json.loads((sdir / "manifest.json").read_text())
    n = manifest["n_views"]
    gt = sdir / "gt"
    return SceneSample(
        origin=read_png(sdir / "origin.png"),
        views=tuple(read_png(sdir / view_name(i)) for i in range(n)),
        gt_shadow=tuple(read_mask_png(gt / f"shadow_{_idx(i)}.png") for i in range(n)),
        gt_light=tuple(read_mask_png(gt / f"light_{_idx(i)}.png") for i in range(n)),
        gt_occ_mask=tuple(read_binary_png(gt / f"occmask_{_idx(i)}.png") for i in range(n)),
        gt_occ_content=tuple(read_png(gt / f"occ_{_idx(i)}.png") for i in range(n)),
        params=tuple(params_from_dict(d) for d in manifest["views"]),
        seed=manifest["seed"],
    )


def list_sample_ids(root: Path) -> list[str]:
    return sorted(p.name for p in Path(root).iterdir() if (p / "manifest.json").is_file())


def save_labels(root: Path, sample_id: str, labels: pseudolabel.SequenceLabels) -> Path:
    pdir = Path(root) / sample_id / "pseudo"
    pdir.mkdir(parents=True, exist_ok=True)
    for i in range(labels.n_views):
        write_png(pdir / f"shadow_{_idx(i)}.png", labels.shadow[i])
        write_png(pdir / f"light_{_idx(i)}.png", labels.light[i])
        write_png(pdir / f"occmask_{_idx(i)}.png", labels.occ[i])
        write_png(pdir / f"sl_{_idx(i)}.png", labels.shading[i])
    return pdir


def load_labels(root: Path, sample_id: str, n_views: int) -> pseudolabel.SequenceLabels:
    pdir = Path(root) / sample_id / "pseudo"
    return pseudolabel.SequenceLabels(
        shadow=tuple(read_mask_png(pdir / f"shadow_{_idx(i)}.png") for i in range(n_views)),
        light=tuple(read_mask_png(pdir / f"light_{_idx(i)}.png") for i in range(n_views)),
        shading=tuple(read_png(pdir / f"sl_{_idx(i)}.png") for i in range(n_views)),
        occ=tuple(read_binary_png(pdir / f"occmask_{_idx(i)}.png") for i in range(n_views)),
    )


def has_labels(root: Path, sample_id: str, n_views: int) -> bool:
    pdir = Path(root) / sample_id / "pseudo"
    needed = [f"{kind}_{_idx(i)}.png" for i in range(n_views) for kind in ("shadow", "light", "occmask", "sl")]
    return all((pdir / name).is_file() for name in needed)


def save_solution(
    out_root: Path,
    sample_id: str,
    result: decomp.Decomposition,
    trace_payload: dict,
) -> Path:
    """Write the decomposition (masks binarized for export) and its trace."""
    odir = Path(out_root) / sample_id
    odir.mkdir(parents=True, exist_ok=True)
    shadings, recons, masks = evalkit.decomposition_rasters(result)
    write_png(odir / "oi.png", result.oi)
    for i in range(result.n_views):
        write_png(odir / f"sl_{_idx(i)}.png", shadings[i])
        write_png(odir / f"shadow_{_idx(i)}.png", result.shadow[i])
        write_png(odir / f"light_{_idx(i)}.png", result.light[i])
        write_png(odir / f"occmask_{_idx(i)}.png", masks[i])
        write_png(odir / f"recon_{_idx(i)}.png", recons[i])
    write_json(odir / "trace.json", trace_payload)
    return odir


def load_solution_rasters(
    out_root: Path, sample_id: str, n_views: int
) -> tuple[Image, list[Image], list[Image], list[BinaryMask]]:
    """(oi, shading images, reconstructions, binary masks) for evaluation."""
    odir = Path(out_root) / sample_id
    oi = read_png(odir / "oi.png")
    shadings = [read_png(odir / f"sl_{_idx(i)}.png") for i in range(n_views)]
    recons = [read_png(odir / f"recon_{_idx(i)}.png") for i in range(n_views)]
    masks = [read_binary_png(odir / f"occmask_{_idx(i)}.png") for i in range(n_views)]
    return oi, shadings, recons, masks


def write_report(
    out_root: Path,
    report: evalkit.EvalReport,
    config_hash: str,
    seed: int,
    tool_version: str,
) -> tuple[Path, Path]:
    payload = {
        "schema_version": 1,
        "config_hash": config_hash,
        "seed": seed,
        "tool_version": tool_version,
    }
    payload.update(report.to_dict())
    json_path = Path(out_root) / "report.json"
    csv_path = Path(out_root) / "report.csv"
    write_json(json_path, payload)
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        fieldnames = [f.name for f in dataclasses.fields(evalkit.SampleRecord)]
        writer.writerow(fieldnames)
        for record in report.records:
            writer.writerow([getattr(record, name) for name in fieldnames])
    return json_path, csv_path
