#!/usr/bin/env python3
"""Convert the two public email corpora to charnet's text,label CSVs.

Inputs, as published on Kaggle:

* Enron email dataset: a CSV with columns ``file,message`` where each
  message is a raw RFC-822 email. Bodies become the "friend" class.
* Fraudulent "419" email corpus: one large text file of concatenated
  emails in mbox style, each starting with a line that begins
  ``From r``. Bodies become the "foe" class.

Usage:
    python scripts/prepare_email_corpora.py \
        --enron emails.csv --fraud fraudulent_emails.txt --out data/

Writes ``<out>/enron.csv`` and ``<out>/419.csv`` with a ``text,label``
header, ready for ``charnet train`` and the acceptance suite
(CHARNET_EMAIL_DATA=<out>).
"""

from __future__ import annotations

import argparse
import csv
import email
import email.policy
import os
import sys

MIN_BODY_CHARS = 40  # drop empty or boilerplate-only bodies


def email_body(raw: str) -> str:
    """Plain-text body of one RFC-822 message."""
    msg = email.message_from_string(raw, policy=email.policy.compat32)
    if msg.is_multipart():
        parts = [p.get_payload(decode=False) for p in msg.walk()
                 if p.get_content_type() == "text/plain"
                 and not p.is_multipart()]
        return "\n".join(p for p in parts if isinstance(p, str))
    payload = msg.get_payload(decode=False)
    return payload if isinstance(payload, str) else ""


def read_enron(path: str, limit: int | None) -> list[str]:
    bodies = []
    csv.field_size_limit(sys.maxsize)
    with open(path, "r", encoding="utf-8", errors="replace", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "message" not in reader.fieldnames:
            raise SystemExit(f"{path}: expected a CSV with a 'message' column")
        for row in reader:
            body = email_body(row["message"]).strip()
            if len(body) >= MIN_BODY_CHARS:
                bodies.append(body)
            if limit and len(bodies) >= limit:
                break
    return bodies


def read_fraud(path: str, limit: int | None) -> list[str]:
    """Split the mbox-style dump on its 'From r' separators."""
    with open(path, "r", encoding="latin-1") as fh:
        text = fh.read()
    bodies = []
    chunks = text.split("\nFrom r")
    for chunk in chunks:
        # drop the header block: everything up to the first blank line
        head, sep, body = chunk.partition("\n\n")
        if not sep:
            continue
        body = body.strip()
        if len(body) >= MIN_BODY_CHARS:
            bodies.append(body)
        if limit and len(bodies) >= limit:
            break
    return bodies


def write_corpus(bodies: list[str], label: str, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["text", "label"])
        for body in bodies:
            writer.writerow([body, label])


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--enron", required=True,
                        help="Kaggle Enron emails.csv")
    parser.add_argument("--fraud", required=True,
                        help="Kaggle fraudulent_emails.txt")
    parser.add_argument("--out", default="data", help="output directory")
    parser.add_argument("--limit", type=int, default=None,
                        help="cap per corpus (default: keep everything)")
    args = parser.parse_args(argv)

    os.makedirs(args.out, exist_ok=True)
    enron = read_enron(args.enron, args.limit)
    write_corpus(enron, "friend", os.path.join(args.out, "enron.csv"))
    fraud = read_fraud(args.fraud, args.limit)
    write_corpus(fraud, "foe", os.path.join(args.out, "419.csv"))
    print(f"wrote {len(enron)} friend and {len(fraud)} foe documents to {args.out}")
    if min(len(enron), len(fraud)) < 1000:
        print("note: fewer than 1000 documents in a class; the acceptance "
              "suite balances at 1000 per class", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
