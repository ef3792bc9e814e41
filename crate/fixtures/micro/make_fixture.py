"""Writes the 10-user micro fixture: u.data, u.item, u.user, candidates.csv
and script.jsonl. Run from this directory; the output is checked in."""

GENRES = ["unknown", "Action", "Adventure", "Animation", "Children's", "Comedy", "Crime",
          "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror", "Musical", "Mystery",
          "Romance", "Sci-Fi", "Thriller", "War", "Western"]

ITEMS = [
    ("Toy Story (1995)", "Animation|Children's|Comedy"),
    ("GoldenEye (1995)", "Action|Adventure|Thriller"),
    ("Four Rooms (1995)", "Thriller"),
    ("Get Shorty (1995)", "Action|Comedy|Drama"),
    ("Copycat (1995)", "Crime|Drama|Thriller"),
    ("Twelve Monkeys (1995)", "Drama|Sci-Fi"),
    ("Babe (1995)", "Children's|Comedy|Drama"),
    ("Dead Man Walking (1995)", "Drama"),
    ("Fargo (1996)", "Crime|Drama|Thriller"),
    ("Heat (1995)", "Action|Crime|Thriller"),
    ("Braveheart (1995)", "Action|Drama|War"),
    ("Apollo 13 (1995)", "Action|Drama|Thriller"),
    ("Batman Forever (1995)", "Action|Adventure|Comedy|Crime"),
    ("Rob Roy (1995)", "Drama|Romance|War"),
    ("Crimson Tide (1995)", "Drama|Thriller|War"),
    ("Desperado (1995)", "Action|Romance|Thriller"),
    ("Die Hard: With a Vengeance (1995)", "Action|Thriller"),
    ("Speed (1994)", "Action|Romance|Thriller"),
    ("True Lies (1994)", "Action|Adventure|Comedy|Romance"),
    ("Stargate (1994)", "Action|Adventure|Sci-Fi"),
    ("Clear and Present Danger (1994)", "Action|Adventure|Thriller"),
    ("Star Wars (1977)", "Action|Adventure|Romance|Sci-Fi|War"),
    ("Fugitive, The (1993)", "Action|Thriller"),
    ("Jurassic Park (1993)", "Action|Adventure|Sci-Fi"),
    ("Terminator 2: Judgment Day (1991)", "Action|Sci-Fi|Thriller"),
    ("Aliens (1986)", "Action|Sci-Fi|Thriller|War"),
    ("Raiders of the Lost Ark (1981)", "Action|Adventure"),
    ("Die Hard (1988)", "Action|Thriller"),
    ("Pulp Fiction (1994)", "Crime|Drama"),
    ("Casablanca (1942)", "Drama|Romance|War"),
    ("Vertigo (1958)", "Mystery|Thriller"),
    ("Psycho (1960)", "Horror|Romance|Thriller"),
    ("Godfather, The (1972)", "Action|Crime|Drama"),
    ("Blade Runner (1982)", "Film-Noir|Sci-Fi"),
    ("Amadeus (1984)", "Drama|Mystery"),
    ("Groundhog Day (1993)", "Comedy|Romance"),
    ("Sense and Sensibility (1995)", "Drama|Romance"),
    ("Trainspotting (1996)", "Drama"),
    ("Mars Attacks! (1996)", "Action|Comedy|Sci-Fi|War"),
    ("Contact (1997)", "Drama|Sci-Fi"),
]

USERS = [(1, 24, "M", "technician"), (2, 53, "F", "other"), (3, 23, "M", "writer"),
         (4, 24, "M", "technician"), (5, 33, "F", "other"), (6, 42, "M", "executive"),
         (7, 57, "M", "administrator"), (8, 36, "M", "administrator"), (9, 29, "M", "student"),
         (10, 53, "M", "lawyer")]

# (test item, rating) pairs held out as each user's two most recent events.
TEST = {
    1: [(9, 5), (10, 4)],
    2: [(12, 5), (20, 2)],
    3: [(15, 4), (16, 4)],
    4: [(25, 1), (26, 2)],
    5: [(9, 4), (28, 5)],
    6: [(30, 5), (31, 2)],
    7: [(11, 5), (13, 5)],
    8: [(14, 3), (17, 4)],
    9: [(10, 4), (27, 5)],
    10: [(22, 4), (40, 4)],
}

MALFORMED = "I am not sure which of these you would like."


def title(i):
    return ITEMS[i - 1][0]


def ranked(ids):
    return "The current list is:" + "".join(f"\n{n}.{title(i)}" for n, i in enumerate(ids, 1))


# One entry per provider call, in the order users are evaluated (user 4 has
# no relevant test item and is skipped without a call).
SCRIPT = [
    ranked([9, 10, 11, 12, 13]),
    ranked([12, 9, 10, 11, 13]),
    ranked([9, 15, 10, 16, 11]),
    ranked([9, 10, 11, 12, 13]),
    ranked([9, 10, 11, 12, 13]),
    ranked([13, 11, 9, 10, 12]),
    ranked([9, 10, 11, 12, 17]),
    MALFORMED, MALFORMED, MALFORMED, MALFORMED,
    "The current list is:\n1.Citizen Kane (1941)\n2.Speed (1994)\n3.True Lies (1994)\n4.Stargate (1994)\n5.Clear and Present Danger (1994)",
    ranked([18, 19, 20, 21, 22]),
]


def main():
    import json

    with open("u.item", "w") as f:
        for i, (t, g) in enumerate(ITEMS, 1):
            year = t[-5:-1]
            flags = ["1" if name in g.split("|") else "0" for name in GENRES]
            f.write("|".join([str(i), t, f"01-Jan-{year}", "", ""] + flags) + "\n")
    with open("u.user", "w") as f:
        for u, age, g, occ in USERS:
            f.write(f"{u}|{age}|{g}|{occ}|{10000 + u}\n")
    with open("u.data", "w") as f:
        for u, _, _, _ in USERS:
            for i in range(1, 9):
                f.write(f"{u}\t{i}\t{(u + i) % 5 + 1}\t{880000000 + i}\n")
            for n, (i, r) in enumerate(TEST[u]):
                f.write(f"{u}\t{i}\t{r}\t{890000000 + n}\n")
    with open("candidates.csv", "w") as f:
        f.write("user_id,item_id,score\n")
        for u, _, _, _ in USERS:
            for i in range(9, 29):
                f.write(f"{u},{i},{100 - i}\n")
    with open("script.jsonl", "w") as f:
        for r in SCRIPT:
            f.write(json.dumps({"response": r}) + "\n")


if __name__ == "__main__":
    main()
