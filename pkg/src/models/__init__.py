# Domain and configuration records
