from .checkpoint import from_bytes, to_bytes
from .fedavg import (
    ClientUpdate,
    EncryptedUpdate,
    GlobalStep,
    decrypt_model,
    encrypt_model,
    encrypt_update,
    encrypted_fedavg,
    fedavg,
    local_train,
)
from .model import (
    DatasetShard,
    DivergenceError,
    ModelWeights,
    ShapeError,
    TrainConfig,
    evaluate,
    gradient_check,
    init_model,
    loss_and_grad,
    param_count,
    train_sgd,
)
