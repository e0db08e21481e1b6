import tempfile
from dataclasses import asdict
from pathlib import Path
from typing import List, Optional

import uvicorn
from fastapi import FastAPI, File, HTTPException, UploadFile
from pydantic import BaseModel

from configs.gen_sep_cfs import ComponentNames, ConfigGenerator, OracleSettings, PipelineConfig, SamplingRanges
from evaluation.evaluator_batch import BatchEvaluator
from evaluation.metrics import sdr_db, si_snr_db, si_snr_improvement_db, snr_db, snr_improvement_db
from separation.pipeline_batch import BatchPipelineRunner
from simulation.dataset_generator_batch import BatchDatasetGenerator
from storage.wav_io import read_mono

app = FastAPI(
    title="Moving Source Separation API",
    description="Scene simulation, trajectory-aided separation and evaluation for moving FOA sources",
    version="1.0.0"
)


# Models for request validation
class DatasetRequest(BaseModel):
    out_dir: str
    master_seed: int = 0
    n_scenes: int = 20
    parallelism: int = 1
    source_files: List[str] = []
    n_sources_min: int = 2
    n_sources_max: int = 2
    duration_s: float = 10.0
    anechoic: bool = False
    stationary: bool = False


class RunRequest(BaseModel):
    manifest_path: str
    out_dir: str
    envelope: str = "clustered"
    tracker: str = "intensity"
    extractor: str = "steered"
    refiner: str = "steered"
    rounds: int = 2
    c_max: int = 3
    count_threshold: float = 0.25
    refresh_envelope: bool = False
    sigma_deg: float = 0.0
    refined_sigma_deg: Optional[float] = None
    leakage: float = 0.0
    seed: int = 0
    parallelism: int = 1


class EvalRequest(BaseModel):
    run_dir: str
    report_path: str
    plot: bool = False


# Initialize ConfigGenerator
config_generator = ConfigGenerator()


def _dataset_config(request: DatasetRequest):
    sampling = SamplingRanges(n_sources=(request.n_sources_min, request.n_sources_max),
                              duration_s=request.duration_s, anechoic=request.anechoic,
                              stationary=request.stationary)
    return config_generator.generate_dataset_config(
        out_dir=request.out_dir,
        master_seed=request.master_seed,
        n_scenes=request.n_scenes,
        parallelism=request.parallelism,
        source_files=request.source_files,
        sampling=sampling,
    )


def _run_config(request: RunRequest):
    return config_generator.generate_run_config(
        manifest_path=request.manifest_path,
        out_dir=request.out_dir,
        components=ComponentNames(envelope=request.envelope, tracker=request.tracker,
                                  extractor=request.extractor, refiner=request.refiner),
        pipeline=PipelineConfig(rounds=request.rounds, c_max=request.c_max, count_threshold=request.count_threshold,
                                refresh_envelope=request.refresh_envelope),
        oracle=OracleSettings(sigma_deg=request.sigma_deg, refined_sigma_deg=request.refined_sigma_deg,
                              leakage=request.leakage, seed=request.seed),
        parallelism=request.parallelism,
    )


@app.post("/api/generate-config/dataset")
async def generate_dataset_config(request: DatasetRequest):
    try:
        return {"status": "success", "config": asdict(_dataset_config(request))}
    except Exception as e:
        raise HTTPException(status_code=400, detail=str(e))


@app.post("/api/generate-config/run")
async def generate_run_config(request: RunRequest):
    try:
        return {"status": "success", "config": asdict(_run_config(request))}
    except Exception as e:
        raise HTTPException(status_code=400, detail=str(e))


@app.post("/api/dataset/generate")
async def generate_dataset(request: DatasetRequest):
    try:
        manifest, result = BatchDatasetGenerator(_dataset_config(request)).process()
        return {
            "status": "success",
            "manifest_path": result.manifest_path,
            "generated_scenes": result.generated_scenes,
            "total_scenes": result.total_scenes,
            "failed_scenes": result.failed_scenes,
            "processing_time": result.processing_time
        }
    except Exception as e:
        raise HTTPException(status_code=400, detail=str(e))


@app.post("/api/pipeline/run")
async def run_pipeline(request: RunRequest):
    try:
        result = BatchPipelineRunner(_run_config(request)).process()
        return {
            "status": "success",
            "processed_scenes": result.processed_scenes,
            "total_scenes": result.total_scenes,
            "failed_scenes": result.failed_scenes,
            "processing_time": result.processing_time
        }
    except Exception as e:
        raise HTTPException(status_code=400, detail=str(e))


@app.post("/api/evaluation/run")
async def run_evaluation(request: EvalRequest):
    try:
        config = config_generator.generate_eval_config(run_dir=request.run_dir, report_path=request.report_path,
                                                       plot=request.plot)
        report = BatchEvaluator(config).process()
        return {"status": "success", "report": asdict(report), "table": report.render_table()}
    except Exception as e:
        raise HTTPException(status_code=400, detail=str(e))


@app.post("/api/metrics")
async def compute_metrics(estimate: UploadFile = File(...), target: UploadFile = File(...),
                          mixture: Optional[UploadFile] = File(None)):
    try:
        with tempfile.TemporaryDirectory() as tmp:
            signals = {}
            for name, upload in (("estimate", estimate), ("target", target), ("mixture", mixture)):
                if upload is None:
                    continue
                path = Path(tmp) / f"{name}.wav"
                path.write_bytes(await upload.read())
                signals[name] = read_mono(path)
        est, trg = signals["estimate"], signals["target"]
        values = {"snr_db": snr_db(est, trg), "si_snr_db": si_snr_db(est, trg),
                  "sdr_db": sdr_db(est, trg, min(512, est.shape[0]))}
        if "mixture" in signals:
            values["snr_improvement_db"] = snr_improvement_db(est, trg, signals["mixture"])
            values["si_snr_improvement_db"] = si_snr_improvement_db(est, trg, signals["mixture"])
        return {"status": "success", "metrics": values}
    except Exception as e:
        raise HTTPException(status_code=400, detail=str(e))


if __name__ == "__main__":
    uvicorn.run(app, host="0.0.0.0", port=8000)
