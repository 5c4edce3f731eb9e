from .data import find_mnist_dir, load_dataset, load_mnist, make_blobs, make_glyphs, read_idx
from .layers import (
    BatchNorm,
    Conv2d,
    Dense,
    Flatten,
    MaxPool2,
    PactQuant,
    ReLU,
    softmax_cross_entropy,
)
from .network import Network, build_mlp, build_surrogate_cnn, load_checkpoint, save_checkpoint
from .train import EvalResult, TrainingDiverged, TrainSpec, evaluate, lr_at, train
