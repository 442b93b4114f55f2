from .packets import (
    DecodeError,
    EncodingError,
    FilterError,
    Packet,
    PacketKind,
    TopicFilter,
    decode_packet,
    encode_packet,
    match_topic,
)
from .broker import Broker
from .client import Client, PublishReceipt
from .stream import StreamConn, StreamClosedError, stream_wire_size

__all__ = [
    "Packet", "PacketKind", "TopicFilter", "encode_packet", "decode_packet",
    "match_topic", "EncodingError", "DecodeError", "FilterError",
    "Broker", "Client", "PublishReceipt",
    "StreamConn", "StreamClosedError", "stream_wire_size",
]
