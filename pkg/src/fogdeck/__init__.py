"""fogdeck: an elastic IoT device-management testbed without the hardware.

Simulated edge devices (sensors, RTC, buzzer) attach to fog-node agents
that push readings to a self-hosted datastore when the cloud path is up
and serve operators directly over an encrypted socket protocol when it
is not. A control-plane service aggregates everything into the operator
panels and routes commands back down.
"""

__version__ = "0.1.0"
