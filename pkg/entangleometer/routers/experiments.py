# Experiments router: stateless batch endpoints mirroring the CLI commands
from fastapi import APIRouter

from entangleometer.models.schemas import (
    CharacterizeConfig,
    ExperimentConfig,
    FitRequest,
    Table1Bundle,
)
from entangleometer.services.experiment_service import experiment_service, format_table1

router = APIRouter(tags=["experiments"])


@router.post("/simulate")
def simulate(config: ExperimentConfig):
    output = experiment_service.simulate(config)
    return {
        "report": output.report,
        "datasets": {name: dataset.model_dump(mode="json") for name, dataset in output.datasets.items()},
    }


@router.post("/fit")
def fit(request: FitRequest):
    output = experiment_service.fit(
        request.dataset,
        request.config,
        sensitivity=request.sensitivity,
        delta_std=request.delta_std,
    )
    return output.report


@router.post("/characterize")
def characterize(config: CharacterizeConfig):
    output = experiment_service.characterize(config)
    return {"report": output.report, "rho": output.documents["rho"]}


@router.post("/table1")
def table1(bundle: Table1Bundle):
    output = experiment_service.table1(bundle)
    return {"report": output.report, "text": format_table1(output.report)}
