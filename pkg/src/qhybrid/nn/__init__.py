from .layers import (
    ConvTranspose2d,
    Conv2d,
    Dense,
    Flatten,
    Layer,
    MaxPool2d,
    ReLU,
    Reshape,
    Sequential,
    Sigmoid,
    backward,
    forward,
)
from .losses import mse_loss, softmax, softmax_cross_entropy
from .optim import SGD, Adagrad, Adam, OptimizerSpec, optimizer_step
