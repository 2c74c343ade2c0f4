'''
File: factory.py
Project: nucpoint
File Created: Friday, 6th March 2026 4:05:22 pm
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Monday, 16th March 2026 5:40:19 pm
Modified By: koko (koko231125@gmail.com>)
'''


import nucpoint.interface as ifc
from nucpoint.classifier import LinearHead
from nucpoint.config import EncoderConfig
from nucpoint.detector import DetectorModel
from nucpoint.encoder import ConvEncoder
from nucpoint.errors import DataFormatError
from nucpoint.joint import JointModel
from nucpoint.rtypes import EncoderKind


class ModelFactory:
    """The ModelFactory class creates models by registered name, from a config or from the
    metadata stored in a checkpoint.

    Attributes:
        valid_encoders (dict[str, type]):
            A dictionary mapping encoder names to their classes.
        valid_detectors (dict[str, type]):
            A dictionary mapping detector names to their classes.
    """
    valid_encoders: dict[str, type]
    valid_detectors: dict[str, type]

    def __init__(self, **kwargs) -> None:
        """Initialize the ModelFactory object.

        Args:
            **kwargs:
                `encoder` and `detector` register further classes under their class name. They
                must accept the constructor arguments of ConvEncoder and DetectorModel.
        """
        self.valid_encoders = {'ConvEncoder': ConvEncoder}
        self.valid_detectors = {'DetectorModel': DetectorModel}

        if 'encoder' in kwargs:
            encoder = kwargs['encoder']
            assert isinstance(encoder, type), TypeError("Invalid encoder class.")
            self.valid_encoders[encoder.__name__] = encoder
        if 'detector' in kwargs:
            detector = kwargs['detector']
            assert isinstance(detector, type), TypeError("Invalid detector class.")
            self.valid_detectors[detector.__name__] = detector

    def create_encoder(
        self,
        config: EncoderConfig,
        seed: int = 0,
        kind: EncoderKind | None = None,
        encoder: str = 'ConvEncoder',
    ) -> ifc.FeatureEncoder:
        """Create an untrained encoder.

        Args:
            config (EncoderConfig):
                Architecture of the encoder.
            seed (int, optional):
                Seed of the initial weights. Defaults to 0.
            kind (EncoderKind | None, optional):
                Overrides `config.kind`. Defaults to None.
            encoder (str, optional):
                The registered class name. Defaults to 'ConvEncoder'.

        Returns:
            FeatureEncoder:
                The encoder, frozen unless its kind is trainable.
        """
        kind = config.kind if kind is None else kind
        cls = self.valid_encoders[encoder]
        return cls(config.channels, config.width, config.stride, kind, kind != EncoderKind.TRAINABLE, seed)

    def from_meta(self, meta: dict[str, object], source: str = '<checkpoint>') -> ifc.Model:
        """Rebuild an untrained model from checkpoint metadata.

        Raises:
            DataFormatError:
                If the metadata names an unknown model or misses a field.
        """
        try:
            kind = meta['model']
            if kind == 'encoder':
                cls = self.valid_encoders[meta.get('class', 'ConvEncoder')]
                return cls(
                    int(meta['channels']), int(meta['width']), int(meta['stride']),
                    EncoderKind(meta['kind']), bool(meta['frozen']),
                )
            if kind == 'detector':
                cls = self.valid_detectors[meta.get('class', 'DetectorModel')]
                return cls(int(meta['width']), int(meta['stride']))
            if kind == 'head':
                return LinearHead(int(meta['in_features']), int(meta['num_classes']))
            if kind == 'joint':
                backbone = self.from_meta(meta['backbone'], source)
                return JointModel(backbone, int(meta['num_classes']))
        except (KeyError, ValueError, TypeError) as exc:
            raise DataFormatError(source, f"invalid model metadata ({exc})") from exc
        raise DataFormatError(source, f"unknown model kind '{kind}'")
