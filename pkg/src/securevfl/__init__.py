"""Three-party vertical federated learning simulator over a tracked HE backend."""

from securevfl.approx import (
    KernelMatrix,
    KernelSpec,
    SigmoidPoly,
    eval_poly,
    fit_sigmoid_poly,
    gram_matrix,
    kernel_entry,
    klr_gradient,
    lr_gradient,
    sigmoid_exact,
)
from securevfl.dataset import (
    Dataset,
    VerticalSplit,
    load_csv,
    make_circles,
    make_moons,
    standardize,
    vertical_split,
)
from securevfl.errors import (
    BudgetExhaustedError,
    ConfigError,
    FitError,
    InvalidInputError,
    InvalidLabelError,
    OperandMismatchError,
    ProtocolError,
    SimulatorError,
    WrongKeyError,
)
from securevfl.he_backend import KeyPair, PublicKey, TrackedBackend, TrackedCiphertext
from securevfl.ledger import CostLedger, merge, verify_depth, verify_table1
from securevfl.protocol import (
    EncryptedKernel,
    Federation,
    PartyId,
    ProtocolTranscript,
    audit_transcript,
    exchange_features,
    exchange_kernel,
    exchange_linear_kernel,
    exchange_poly_kernel,
    exchange_rbf_kernel,
)
from securevfl.training import (
    Model,
    TrainConfig,
    TrainReport,
    evaluate,
    plaintext_train_klr,
    plaintext_train_lr,
    secure_train_klr,
    secure_train_lr,
)

__version__ = "0.1.0"
