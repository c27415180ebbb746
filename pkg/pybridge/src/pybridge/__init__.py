"""Wire-protocol bridge exposing pretrained seq2seq models as teachers."""

from .server import BridgeModel, serve

__version__ = "0.1.0"
