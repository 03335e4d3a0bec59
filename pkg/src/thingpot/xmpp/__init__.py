from .bridge import EventLog, XmppBridge, execute_command
from .client import AuthError, XmppSession, connect
from .commands import Command, Verb, make_shared_id, parse_command

__all__ = [
    "AuthError", "Command", "EventLog", "Verb", "XmppBridge", "XmppSession",
    "connect", "execute_command", "make_shared_id", "parse_command",
]
