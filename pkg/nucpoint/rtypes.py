'''
File: rtypes.py
Project: nucpoint
File Created: Monday, 2nd March 2026 10:12:41 am
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Wednesday, 11th March 2026 4:37:02 pm
Modified By: koko (koko231125@gmail.com>)
'''


from enum import Enum


class Command(Enum):
    r"""Command enumeration represents every runner exposed by the command-line surface.

    The value of each member is the name typed on the command line.
    """
    GEN_DATA = 'gen-data'
    TRAIN_DET = 'train-det'
    TRAIN_CLS = 'train-cls'
    TRAIN_JOINT = 'train-joint'
    PRETRAIN_ENC = 'pretrain-enc'
    PROBE = 'probe'
    EVAL = 'eval'
    PREDICT = 'predict'
    ABLATE_CAPACITY = 'ablate-capacity'
    ABLATE_DATASETS = 'ablate-datasets'
    ABLATE_STRATEGY = 'ablate-strategy'
    DYNAMICS = 'dynamics'


class EncoderKind(Enum):
    r"""EncoderKind enumeration represents how the weights of a feature encoder came to be.

    Attributes:
        RANDOM_FROZEN (str): 
            Randomly initialised and frozen. The weakest representation, used as a probe baseline.
        PRETEXT_PRETRAINED (str): 
            Trained on the crop classification pretext task, then frozen.
        TRAINABLE (str): 
            Weights are updated by downstream training.
    """
    RANDOM_FROZEN = 'random-frozen'
    PRETEXT_PRETRAINED = 'pretext-pretrained'
    TRAINABLE = 'trainable'


class TrainMode(Enum):
    r"""TrainMode enumeration represents the optimization strategy of the classification network.

    Attributes:
        LINEAR (str): 
            Only the linear head is optimized, the encoder stays frozen.
        FULL (str): 
            The head and every encoder weight are optimized.
        END_TO_END (str): 
            Detection and classification share one backbone and one loss.
    """
    LINEAR = 'linear'
    FULL = 'full'
    END_TO_END = 'end_to_end'


class Supervision(Enum):
    r"""Supervision enumeration represents where the classifier training coordinates come from.

    Attributes:
        GT (str): 
            Ground truth coordinates with ground truth labels.
        DETECTOR (str): 
            Detector outputs matched to ground truth within the evaluation radius, labelled by the 
            matched ground truth. Unmatched detections are discarded.
    """
    GT = 'gt'
    DETECTOR = 'detector'


class ErrorCategory(Enum):
    r"""ErrorCategory enumeration represents the machine readable category printed on failure. 
    The second item of each value is the process exit code.
    """
    CONFIG = ('config', 2)
    INPUT = ('input', 3)
    DATA = ('data', 4)
    SHAPE = ('shape', 5)
    USAGE = ('usage', 5)
    INTERNAL = ('internal', 5)

    @property
    def label(self) -> str:
        return self.value[0]

    @property
    def exit_code(self) -> int:
        return self.value[1]
