"""Two-stage neuroevolution of plastic spiking controllers for quadrotor heave."""
from .archive import PopulationArchive, export_trace, parse_population, serialize_population
from .config import RunConfig
from .errors import (ArchiveParseError, ConfigError, IdentificationError, NumericDomainError,
                     StructuralError)
from .fitness import FitnessReport, rank_compare, rank_key
from .genome import ConnGene, Genome, InnovationRegistry, NodeGene, minimal_genome
from .harness import (EpisodeConfig, ExperimentConfig, Plant, evaluate, pid_comparison,
                      plasticity_validation, run_pair, run_stage1, run_stage2, transfer_study)
from .neat import EvolutionConfig, evolve
from .network import NetworkConfig, build_network, network_step, reset_network
from .plants import IdentifiedHeaveModel, PIDConfig, TruthHeaveConfig, identify_heave, tune_pid
from .plasticity import HebbianRule, equilibrium_rate, hebbian_update, stdp_window
from .snn import IzhikevichParams, NeuronState, decode_activation, encode_current, neuron_step
from .stats import critical_u, mann_whitney_u

__version__ = "0.1.0"
