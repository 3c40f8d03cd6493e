class ValueSpace:
    DIFFUSION = 'diffusion'  # -1..1 at t=0, unbounded when noised
    PROBABILITY = 'probability'  # 0..1

    @staticmethod
    def tuple():
        return ValueSpace.DIFFUSION, ValueSpace.PROBABILITY


class AttentionNorm:
    RAW = 'raw'
    MINMAX = 'minmax'

    @staticmethod
    def tuple():
        return AttentionNorm.RAW, AttentionNorm.MINMAX


class AttentionSource:
    FAKE = 'fake'
    REAL = 'real'
    BOTH = 'both'

    @staticmethod
    def tuple():
        return AttentionSource.FAKE, AttentionSource.REAL, AttentionSource.BOTH


class AttentionScales:
    SCALE_16 = 16
    SCALE_32 = 32
    SCALE_64 = 64

    @staticmethod
    def tuple():
        return AttentionScales.SCALE_16, AttentionScales.SCALE_32, AttentionScales.SCALE_64

    @staticmethod
    def default_for(structure):
        """ 32 for small structures (nuclei-like), 16 for large ones (organ-like) """
        try:
            return {
                Structure.SMALL: AttentionScales.SCALE_32,
                Structure.LARGE: AttentionScales.SCALE_16,
            }[structure]
        except KeyError:
            raise ValueError(
                'Structure "{}" is invalid. Supported structures are {}'.format(
                    structure, ', '.join((Structure.SMALL, Structure.LARGE))))


class Structure:
    SMALL = 'small'
    LARGE = 'large'


class ShapeFamily:
    ELLIPSE = 'ellipse'
    BLOB = 'blob'

    @staticmethod
    def tuple():
        return ShapeFamily.ELLIPSE, ShapeFamily.BLOB


class Commands:
    SYNTH = 'synth'
    TRAIN = 'train'
    PREDICT = 'predict'
    EVALUATE = 'evaluate'
    ABLATE = 'ablate'

    @staticmethod
    def tuple():
        return Commands.SYNTH, Commands.TRAIN, Commands.PREDICT, Commands.EVALUATE, Commands.ABLATE


class Variants:
    FULL = 'full'
    NO_ATTENTION = 'no_attention'
    NO_LATENT = 'no_latent'

    @staticmethod
    def tuple():
        return Variants.FULL, Variants.NO_ATTENTION, Variants.NO_LATENT


class ExitCodes:
    OK = 0
    RUNTIME_ERROR = 1
    CONFIG_ERROR = 2


COMMON_TYPES = {
    "CLASS_NAMES_BINARY": ['background', 'foreground'],
    "CLASS_NAMES_MULTI": ['background', 'anterior', 'posterior'],

    "METRICS": ['dice', 'iou', 'precision', 'recall'],

    "PRED_SUFFIX": ".pred.png",
    "PROB_SUFFIX": ".prob.png",

    "IMAGES_DIR": "images",
    "MASKS_DIR": "masks",
    "CHECKPOINTS_DIR": "checkpoints",
    "PREDICTIONS_DIR": "predictions",

    "MANIFEST_FILE": "manifest.json",
    "TRAIN_LOG_FILE": "train_log.jsonl",
    "DIAGNOSTICS_FILE": "diagnostics.json",

    # label palette for multi-class masks (index -> RGB)
    "PALETTE": [0, 0, 0, 255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 0, 255, 0, 255, 0, 255, 255],

    "BINARY_MASK_THRESHOLD": 128,
}


def class_names(class_count):
    """ channel names for a label map with `class_count` foreground classes """
    if class_count <= 1:
        return list(COMMON_TYPES["CLASS_NAMES_BINARY"])
    names = list(COMMON_TYPES["CLASS_NAMES_MULTI"])
    while len(names) < class_count + 1:
        names.append('class_%d' % len(names))
    return names[:class_count + 1]
