"""Fixed chest-finding vocabulary used by the keyword prompt.

Fifty lowercase terms; "support devices" covers tube/line/hardware
position changes and is excluded from progression scoring downstream.
"""

DISEASE_TERMS: tuple[str, ...] = (
    "support devices",
    "airspace opacity",
    "alveolar hemorrhage",
    "aspiration",
    "atelectasis",
    "bone lesion",
    "bronchiectasis",
    "calcified nodule",
    "clavicle fracture",
    "consolidation",
    "copd/emphysema",
    "costophrenic angle blunting",
    "elevated hemidiaphragm",
    "enlarged cardiac silhouette",
    "enlarged hilum",
    "fluid overload/heart failure",
    "goiter",
    "granulomatous disease",
    "hernia",
    "hydropneumothorax",
    "increased reticular markings/ild pattern",
    "infiltration",
    "interstitial lung disease",
    "lobar/segmental collapse",
    "low lung volumes",
    "lung cancer",
    "lung lesion",
    "lung opacity",
    "mass/nodule (not otherwise specified)",
    "mediastinal displacement",
    "mediastinal widening",
    "opacity",
    "pericardial effusion",
    "pleural effusion",
    "pleural/parenchymal scarring",
    "pneumonia",
    "pneumothorax",
    "pulmonary edema/hazy opacity",
    "rib fracture",
    "scoliosis",
    "shoulder osteoarthritis",
    "spinal degenerative changes",
    "spinal fracture",
    "sub-diaphragmatic air",
    "subcutaneous air",
    "superior mediastinal mass/enlargement",
    "tortuous aorta",
    "vascular calcification",
    "vascular congestion",
    "vascular redistribution",
)

SUPPORT_DEVICES = "support devices"

VOCABULARY_SIZE = 50
