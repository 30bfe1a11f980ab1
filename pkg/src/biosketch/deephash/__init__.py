from .grid import DEFAULT_CANDIDATES, GridSearchResult, grid_search
from .network import (
    LossWeights,
    ShapeError,
    ToyNetwork,
    fuse,
    loss_balance,
    loss_binarization,
    loss_classification,
    total_loss,
)
from .train import (
    ContinuationSchedule,
    ToyDataset,
    TrainingDivergence,
    TrainResult,
    activation_stats,
    export_codes,
    make_toy_dataset,
    train_step_one,
    train_two_step,
)
