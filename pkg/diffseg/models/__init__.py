from .configs import (GeneratorConfig, DiscriminatorConfig, TrainConfig,
                      InferenceConfig, SyntheticSpec, label_channels_for)
from .records import TrainLogRecord
from .report import ConfusionCounts, MetricsReport
from .sample import LabelMap, Sample
