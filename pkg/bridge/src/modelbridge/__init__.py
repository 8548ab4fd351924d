from .models import EchoModel, load_model
from .protocol import PROTOCOL_VERSION, handle_line
from .server import serve_stdio, serve_tcp

__version__ = "0.1.0"
