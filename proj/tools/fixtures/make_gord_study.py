#!/usr/bin/env python3
"""Writes fixtures/odm/gord_study.xml, the demo GORD protocol bundle."""
import sys
from pathlib import Path

OUT = Path(sys.argv[1] if len(sys.argv) > 1 else "fixtures/odm/gord_study.xml")

# (group oid, group name, query id or None, [(item oid, name, type, alias or None, mandatory, unit item, question)])
BASELINE = [
    ("IG.DEMOGRAPHICS", "Demographics", "Q-DEMOG", [
        ("IT.SUBJECT_ID", "ResearchId", "text", "CDIM/3", True, None, "Research identifier"),
        ("IT.SEX", "Sex", "text", "OMRSE/7", True, None, "Sex"),
        ("IT.BIRTH_DATE", "BirthDate", "date", "CDIM/7", True, None, "Date of birth"),
    ]),
    ("IG.ENCOUNTER", "Encounter", "Q-ENCOUNTER", [
        ("IT.ENCOUNTER_DATE", "EncounterDate", "date", "CDIM/79", False, None, "Date of the consultation"),
        ("IT.PRACTICE", "Practice", "text", "OMRSE/17", False, None, "Physician practice"),
    ]),
    ("IG.DIAGNOSIS", "GORD diagnosis", "Q-GORD-DX", [
        ("IT.GORD_DX", "GordDiagnosis", "coded", "OGMS/73", True, None, "Recorded GORD diagnosis"),
        ("IT.GORD_DX_DATE", "GordDiagnosisDate", "date", "CDIM/12", False, None, "Date of diagnosis"),
    ]),
    ("IG.SYMPTOM", "Presenting symptom", "Q-SYMPTOM", [
        ("IT.SYMPTOM", "Symptom", "coded", "OGMS/20", False, None, "Recorded reflux symptom"),
    ]),
    ("IG.WEIGHT", "Weight", "Q-WEIGHT", [
        ("IT.WEIGHT", "Weight", "float", "CDIM/68", False, "IT.WEIGHT_UNIT", "Body weight"),
        ("IT.WEIGHT_DATE", "WeightDate", "date", "CDIM/67", False, None, "Date weight measured"),
        ("IT.WEIGHT_UNIT", "WeightUnit", "text", "CDIM/100", False, None, "Weight unit"),
    ]),
    ("IG.HEIGHT", "Height", "Q-HEIGHT", [
        ("IT.HEIGHT", "Height", "float", "CDIM/71", False, "IT.HEIGHT_UNIT", "Body height"),
        ("IT.HEIGHT_DATE", "HeightDate", "date", "CDIM/70", False, None, "Date height measured"),
        ("IT.HEIGHT_UNIT", "HeightUnit", "text", "CDIM/88", False, None, "Height unit"),
    ]),
    ("IG.SBP", "Systolic blood pressure", "Q-SBP", [
        ("IT.SBP", "Systolic", "float", "CDIM/73", False, "IT.SBP_UNIT", "Systolic blood pressure"),
        ("IT.SBP_DATE", "SystolicDate", "date", "CDIM/102", False, None, "Date systolic pressure measured"),
        ("IT.SBP_UNIT", "SystolicUnit", "text", "CDIM/84", False, None, "Systolic pressure unit"),
    ]),
    ("IG.DBP", "Diastolic blood pressure", "Q-DBP", [
        ("IT.DBP", "Diastolic", "float", "CDIM/74", False, "IT.DBP_UNIT", "Diastolic blood pressure"),
        ("IT.DBP_DATE", "DiastolicDate", "date", "CDIM/101", False, None, "Date diastolic pressure measured"),
        ("IT.DBP_UNIT", "DiastolicUnit", "text", "CDIM/83", False, None, "Diastolic pressure unit"),
    ]),
    ("IG.MEDICATION", "PPI prescription", "Q-PPI", [
        ("IT.PPI", "PpiDrug", "coded", "CDIM/37", True, None, "Current proton pump inhibitor"),
        ("IT.PPI_DATE", "PpiDate", "date", "CDIM/105", False, None, "Date of last prescription"),
    ]),
    ("IG.LAB", "Laboratory", "Q-LAB", [
        ("IT.LAB_TEST", "LabTest", "coded", "OGMS/56", False, None, "Most recent laboratory test"),
        ("IT.LAB_VALUE", "LabValue", "float", "CDIM/32", False, "IT.LAB_UNIT", "Result"),
        ("IT.LAB_DATE", "LabDate", "date", "CDIM/29", False, None, "Date of result"),
        ("IT.LAB_UNIT", "LabUnit", "text", "CDIM/81", False, None, "Result unit"),
    ]),
    ("IG.BASELINE_CLINICAL", "Baseline assessment", None, [
        ("IT.HEARTBURN_DAYS", "HeartburnDays", "integer", None, True, None, "Days with heartburn in the last week"),
        ("IT.SMOKER", "Smoker", "text", None, False, None, "Current smoker (yes/no)"),
    ]),
]

QUERIES = {
    "Q-DEMOG": ([("CDIM/3", None, "Latest"), ("OMRSE/7", None, "Latest"), ("CDIM/7", None, "Latest")], []),
    "Q-ENCOUNTER": ([("CDIM/79", None, "Latest"), ("OMRSE/17", None, "Latest")], []),
    "Q-GORD-DX": ([("OGMS/73", "GORD", "All")], ["OGMS/73", "CDIM/12"]),
    "Q-SYMPTOM": ([("OGMS/20", "Heartburn", "Latest")], []),
    "Q-WEIGHT": ([("CDIM/68", None, "Latest")], []),
    "Q-HEIGHT": ([("CDIM/71", None, "Latest")], []),
    "Q-SBP": ([("CDIM/73", None, "Latest")], []),
    "Q-DBP": ([("CDIM/74", None, "Latest")], []),
    "Q-PPI": ([("CDIM/37", "PPI", "Latest")], []),
    "Q-LAB": ([("OGMS/56", None, "Latest")], []),
    "Q-FU-WEIGHT": ([("CDIM/68", None, "Latest")], []),
}

FOLLOWUP = [
    ("IG.FU_WEIGHT", "Follow-up weight", "Q-FU-WEIGHT", [
        ("IT.FU_WEIGHT", "FollowUpWeight", "float", "CDIM/68", False, "IT.FU_WEIGHT_UNIT", "Body weight at follow-up"),
        ("IT.FU_WEIGHT_UNIT", "FollowUpWeightUnit", "text", "CDIM/100", False, None, "Weight unit"),
    ]),
    ("IG.FU_CLINICAL", "Follow-up assessment", None, [
        ("IT.FU_HEARTBURN_DAYS", "FollowUpHeartburnDays", "integer", None, True, None, "Days with heartburn in the last week"),
        ("IT.FU_ADHERENCE", "Adherence", "text", None, False, None, "Taking the study medication as prescribed"),
    ]),
]

def prom(prefix):
    return [(f"IG.{prefix}", f"{prefix} questionnaire", None, [
        (f"IT.{prefix}_HEARTBURN", "Heartburn", "integer", None, True, None, "How often did you have heartburn (0-5)"),
        (f"IT.{prefix}_REGURGITATION", "Regurgitation", "integer", None, True, None, "How often did food or acid come back up (0-5)"),
        (f"IT.{prefix}_QOL", "QualityOfLife", "integer", None, False, None, "How much did symptoms limit daily life (0-10)"),
    ])]

FORMS = [
    ("F.CROM1", "Baseline clinical report", "SE.BASELINE", "Baseline visit", "CROM1", BASELINE),
    ("F.CROM2", "Follow-up clinical report", "SE.FOLLOWUP", "Follow-up visit", "CROM2", FOLLOWUP),
    ("F.PROM1", "Patient questionnaire 1", "SE.PROM1", "First patient report", "PROM1", prom("PROM1")),
    ("F.PROM2", "Patient questionnaire 2", "SE.PROM2", "Second patient report", "PROM2", prom("PROM2")),
]


def esc(s):
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def main():
    out = []
    w = out.append
    w('<?xml version="1.0" encoding="UTF-8"?>')
    w('<ODM xmlns="http://www.cdisc.org/ns/odm/v1.3" xmlns:tfm="urn:transform:odm-ext:1"'
      ' FileOID="ODM.GORD" FileType="Snapshot" ODMVersion="1.3.2" CreationDateTime="2016-01-15T09:00:00">')
    w('  <Study OID="GORD">')
    w('    <GlobalVariables>')
    w('      <StudyName>GORD evaluation</StudyName>')
    w('      <StudyDescription>Randomised comparison of on-demand and continuous PPI use in GORD (demo protocol)</StudyDescription>')
    w('      <ProtocolName>GORD-DEMO</ProtocolName>')
    w('    </GlobalVariables>')
    w('    <MetaDataVersion OID="MDV.GORD.1" Name="GORD protocol v1">')
    w('      <Protocol>')
    for i, f in enumerate(FORMS, 1):
        w(f'        <StudyEventRef StudyEventOID="{f[2]}" OrderNumber="{i}" Mandatory="Yes"/>')
    w('      </Protocol>')
    for f in FORMS:
        w(f'      <StudyEventDef OID="{f[2]}" Name="{esc(f[3])}" Repeating="No" Type="Scheduled" tfm:Stage="{f[4]}">')
        w(f'        <FormRef FormOID="{f[0]}" Mandatory="Yes"/>')
        w('      </StudyEventDef>')
    for f in FORMS:
        w(f'      <FormDef OID="{f[0]}" Name="{esc(f[1])}" Repeating="No">')
        for g in f[5]:
            w(f'        <ItemGroupRef ItemGroupOID="{g[0]}" Mandatory="Yes"/>')
        w('      </FormDef>')
    for f in FORMS:
        for g in f[5]:
            w(f'      <ItemGroupDef OID="{g[0]}" Name="{esc(g[1])}" Repeating="No">')
            if g[2]:
                w(f'        <tfm:QueryId>{g[2]}</tfm:QueryId>')
            for it in g[3]:
                w(f'        <ItemRef ItemOID="{it[0]}" Mandatory="{"Yes" if it[4] else "No"}"/>')
            w('      </ItemGroupDef>')
    for f in FORMS:
        for g in f[5]:
            for oid, name, dtype, alias, _mand, unit, question in g[3]:
                unit_attr = f' tfm:UnitItemOID="{unit}"' if unit else ""
                w(f'      <ItemDef OID="{oid}" Name="{name}" DataType="{dtype}"{unit_attr}>')
                w(f'        <Question><TranslatedText xml:lang="en">{esc(question)}</TranslatedText></Question>')
                if alias:
                    w(f'        <Alias Context="CDIM_2.2" Name="{alias}"/>')
                w('      </ItemDef>')
    for qid, (selectors, projection) in QUERIES.items():
        w(f'      <tfm:Query QueryId="{qid}">')
        for concept, flt, temporal in selectors:
            extra = f' CodeFilter="{flt}"' if flt else ""
            w(f'        <tfm:Selector ConceptId="{concept}" Temporal="{temporal}"{extra}/>')
        for p in projection:
            w(f'        <tfm:Project ConceptId="{p}"/>')
        w('      </tfm:Query>')
    w('      <tfm:EligibilityCriterion CriterionId="EC.GORD">')
    w('        <tfm:And>')
    w('          <tfm:AgeAtLeast Years="18"/>')
    w('          <tfm:HasDiagnosis Concept="GORD"/>')
    w('          <tfm:HasActiveDrug Concept="PPI"/>')
    w('        </tfm:And>')
    w('      </tfm:EligibilityCriterion>')
    w('    </MetaDataVersion>')
    w('  </Study>')
    w('</ODM>')
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text("\n".join(out) + "\n")


if __name__ == "__main__":
    main()
