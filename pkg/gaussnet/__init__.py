from gaussnet.attacks import (
    AttackRecord,
    AttackReport,
    GaussClassifier,
    PixelBudget,
    SoftmaxClassifier,
    attack_campaign,
    evaluate,
    fgsm_attack,
    fgsm_sweep,
    one_pixel_attack,
)
from gaussnet.base import GaussNetError, PartitionMatrix
from gaussnet.config import (
    CampaignConfig,
    RefreshPolicy,
    SearchStrategy,
    TailorConfig,
    TrainConfig,
)
from gaussnet.container import read_head, read_model, save_head, save_model
from gaussnet.data import LabeledDataset, load_idx, load_mnist, split, synth_blobs
from gaussnet.geometry import (
    CentroidSystem,
    DistortionBound,
    Provenance,
    equidistant_centroids,
    find_prototype,
    kmeans_assign,
    min_distortion_bound,
    prototype_gap_bound,
    shifted_softmax,
    verify_equivalence,
)
from gaussnet.network import (
    Activation,
    Layer,
    LossKind,
    NetworkModel,
    backward,
    forward_penultimate,
    lipschitz_upper_bound,
    logits,
    predict,
    softmax,
)
from gaussnet.tailoring import (
    GaussHead,
    gauss_confidence,
    kmeans_centroid_update,
    predict_gauss,
    rank_samples,
    tailor_network,
    tailoring_loss,
)
from gaussnet.training import init_model, train
