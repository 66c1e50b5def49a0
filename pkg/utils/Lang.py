import os

import yaml

LANG = dict()
loaded = False
LANG_FILE = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "lang.yaml")


def load():
    global LANG, loaded
    with open(LANG_FILE, encoding="UTF-8") as file:
        LANG = yaml.safe_load(file)
    loaded = True


def get_string(key, **kwargs):
    if not loaded:
        load()

    key_list = key.split("/")
    obj = LANG
    for i in key_list:
        if not isinstance(obj, dict) or i not in obj:
            raise KeyError(f"Unknown lang key: {key}")

        if isinstance(obj[i], str):
            return obj[i].format(**kwargs)
        elif isinstance(obj[i], dict):
            obj = obj[i]
    raise KeyError(f"Lang key is not terminal: {key}")
