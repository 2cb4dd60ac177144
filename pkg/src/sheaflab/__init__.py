"""Deterministic connection-Laplacian sheaves and fixed-sheaf diffusion classifiers."""

from .data import Dataset, Split, generate_splits, load_dataset, save_dataset, synth_sbm
from .errors import DataError, GuardError
from .graph import (
    Graph,
    degree,
    from_edge_list,
    graph_laplacian,
    homophily,
    one_hop_neighbourhood,
)
from .laplacian import (
    BlockLaplacian,
    Coboundary,
    apply,
    coboundary,
    dirichlet_energy,
    euler_diffusion,
    laplacian_from_coboundary,
    normalise,
    sheaf_laplacian,
    spectrum,
    write_laplacian_coo,
)
from .model import (
    ForwardCache,
    ModelParams,
    TrainConfig,
    accuracy,
    backward,
    cross_entropy,
    cross_entropy_grad,
    encode,
    evaluate,
    forward,
    gcn_forward,
    init_params,
    mlp_forward,
    sheaf_layer,
    train,
)
from .sheaf import (
    Sheaf,
    TangentBasis,
    TransportMap,
    align,
    build_connection_sheaf,
    haar_orthogonal,
    local_pca,
    neighbourhood_with_padding,
    node_sheaf_from_matrices,
    random_edge_sheaf,
    random_node_sheaf,
    read_sheaf_csv,
    trivial_sheaf,
    write_sheaf_csv,
)

__version__ = "0.1.0"
